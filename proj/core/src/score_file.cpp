#include "halunet/score_file.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "halunet/feature_record.hpp"

namespace halunet {

void write_scores(const ScoredSet& set, std::ostream& out) {
  out << std::setprecision(17);
  for (const auto& r : set) {
    if (r.id.find('\t') != std::string::npos || r.id.find('\n') != std::string::npos) {
      throw Error("record id '" + r.id + "' contains a tab or newline");
    }
    out << r.id << '\t' << r.uncertainty << '\t' << r.label << '\n';
  }
}

ScoredSet read_scores(std::istream& in) {
  ScoredSet set;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos) {
      throw Error("score file line " + std::to_string(line_no) + ": expected id<TAB>score<TAB>label");
    }
    ScoredRecord r;
    r.id = line.substr(0, t1);
    try {
      std::size_t used = 0;
      const std::string score = line.substr(t1 + 1, t2 - t1 - 1);
      r.uncertainty = std::stod(score, &used);
      if (used != score.size()) throw std::invalid_argument("trailing characters");
    } catch (const std::exception&) {
      throw Error("score file line " + std::to_string(line_no) + ": bad score");
    }
    const std::string label = line.substr(t2 + 1);
    if (label != "0" && label != "1") {
      throw Error("score file line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    r.label = label == "1" ? 1 : 0;
    set.push_back(std::move(r));
  }
  return set;
}

void save_scores(const ScoredSet& set, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write score file '" + path.string() + "'");
  write_scores(set, out);
}

ScoredSet load_scores(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open score file '" + path.string() + "'");
  return read_scores(in);
}

}  // namespace halunet
