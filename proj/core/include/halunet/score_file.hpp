#pragma once

// Per-record score file shared by every scorer: one `id<TAB>score<TAB>label`
// line per record, score printed with 17 significant digits.

#include <filesystem>
#include <iosfwd>

#include "halunet/metrics.hpp"

namespace halunet {

void write_scores(const ScoredSet& set, std::ostream& out);
ScoredSet read_scores(std::istream& in);

void save_scores(const ScoredSet& set, const std::filesystem::path& path);
ScoredSet load_scores(const std::filesystem::path& path);

}  // namespace halunet
