#include "capstext/strength.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>

#include "capstext/error.hpp"

#include "json.hpp"

namespace capstext {

namespace {

// Round to 6 significant digits through the decimal representation, so the
// serialized text parses back to exactly the stored double.
double round6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", value);
  return std::strtod(buf, nullptr);
}

}  // namespace

size_t write_strength_records(const std::vector<StrengthRecord>& records,
                              const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write strength records: " + path);
  for (const auto& record : records) {
    nlohmann::json line;
    line["example"] = record.example;
    line["branch"] = record.branch;
    line["position"] = record.position;
    line["ngram"] = record.ngram;
    nlohmann::json couplings = nlohmann::json::object();
    for (const auto& [category, value] : record.couplings) couplings[category] = round6(value);
    line["couplings"] = std::move(couplings);
    out << line.dump() << "\n";
  }
  if (!out) throw IoError("short write on strength records: " + path);
  return records.size();
}

std::vector<StrengthRecord> read_strength_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open strength records: " + path);
  std::vector<StrengthRecord> records;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json parsed = nlohmann::json::parse(line, nullptr, false);
    if (parsed.is_discarded()) {
      throw FormatError(path + ":" + std::to_string(lineno) + ": invalid JSON");
    }
    StrengthRecord record;
    record.example = parsed.at("example").get<size_t>();
    record.branch = parsed.at("branch").get<size_t>();
    record.position = parsed.at("position").get<size_t>();
    record.ngram = parsed.at("ngram").get<std::string>();
    for (auto it = parsed.at("couplings").begin(); it != parsed.at("couplings").end(); ++it) {
      record.couplings.emplace_back(it.key(), it.value().get<double>());
    }
    records.push_back(std::move(record));
  }
  return records;
}

std::vector<std::pair<std::string, double>> top_ngrams(const std::vector<StrengthRecord>& records,
                                                       const std::string& category, size_t k) {
  if (k < 1) throw ContractError("top_ngrams: k must be >= 1");
  std::map<std::string, std::pair<double, size_t>> totals;  // ngram -> (sum, count)
  bool seen_category = false;
  for (const auto& record : records) {
    for (const auto& [name, value] : record.couplings) {
      if (name == category) {
        seen_category = true;
        auto& [sum, count] = totals[record.ngram];
        sum += value;
        ++count;
      }
    }
  }
  if (!seen_category) throw ContractError("top_ngrams: unknown category '" + category + "'");

  std::vector<std::pair<std::string, double>> ranked;
  ranked.reserve(totals.size());
  for (auto& [ngram, acc] : totals) {
    ranked.emplace_back(ngram, acc.first / static_cast<double>(acc.second));
  }
  std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (ranked.size() > k) ranked.resize(k);
  return ranked;
}

}  // namespace capstext
