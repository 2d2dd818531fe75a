#include "halunet/feature_record.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "json_float.hpp"

namespace halunet {
namespace {

std::string record_error(const std::string& id, const std::string& what) {
  return "record '" + id + "': " + what;
}

std::string line_error(std::size_t line, const std::string& what) {
  return "line " + std::to_string(line) + ": " + what;
}

const FloatJson& require_field(const FloatJson& obj, const char* field,
                               std::size_t line) {
  auto it = obj.find(field);
  if (it == obj.end()) {
    throw Error(line_error(line, std::string("missing field '") + field + "'"));
  }
  return *it;
}

std::vector<float> parse_vector(const FloatJson& arr, const char* field,
                                std::size_t expected, std::size_t line) {
  if (!arr.is_array()) {
    throw Error(line_error(line, std::string("field '") + field + "' is not an array"));
  }
  if (arr.size() != expected) {
    throw Error(line_error(line, std::string("field '") + field + "' has " +
                                     std::to_string(arr.size()) + " values, expected " +
                                     std::to_string(expected)));
  }
  std::vector<float> out;
  out.reserve(expected);
  for (const auto& v : arr) {
    if (!v.is_number()) {
      throw Error(line_error(line, std::string("field '") + field + "' holds a non-number"));
    }
    out.push_back(v.get<float>());
  }
  return out;
}

FeatureRecord parse_record(const FloatJson& obj, int l_max, int d_emb,
                           std::size_t line) {
  if (!obj.is_object()) throw Error(line_error(line, "record is not a JSON object"));
  FeatureRecord r;

  const auto& id = require_field(obj, "id", line);
  if (!id.is_string()) throw Error(line_error(line, "field 'id' is not a string"));
  r.id = id.get<std::string>();

  const auto& ctx = require_field(obj, "context_present", line);
  if (!ctx.is_boolean()) {
    throw Error(line_error(line, "field 'context_present' is not a boolean"));
  }
  r.context_present = ctx.get<bool>();

  const auto& len = require_field(obj, "true_len", line);
  if (!len.is_number_integer()) {
    throw Error(line_error(line, "field 'true_len' is not an integer"));
  }
  const auto true_len = len.get<std::int64_t>();
  if (true_len < 1 || true_len > l_max) {
    throw Error(line_error(line, "field 'true_len' = " + std::to_string(true_len) +
                                     " outside [1, " + std::to_string(l_max) + "]"));
  }
  r.true_len = static_cast<int>(true_len);

  const auto& label = require_field(obj, "label", line);
  if (!label.is_number_integer() ||
      (label.get<std::int64_t>() != 0 && label.get<std::int64_t>() != 1)) {
    throw Error(line_error(line, "field 'label' must be 0 or 1"));
  }
  r.label = static_cast<int>(label.get<std::int64_t>());

  const auto n = static_cast<std::size_t>(r.true_len);
  auto ll = parse_vector(require_field(obj, "ll", line), "ll", n, line);
  auto ent = parse_vector(require_field(obj, "ent", line), "ent", n, line);

  const auto& emb = require_field(obj, "emb", line);
  if (!emb.is_array() || emb.size() != n) {
    throw Error(line_error(line, "field 'emb' must hold true_len = " + std::to_string(n) +
                                     " rows"));
  }

  r.log_likelihoods.assign(static_cast<std::size_t>(l_max), 0.0f);
  r.entropies.assign(static_cast<std::size_t>(l_max), 0.0f);
  r.embeddings.assign(static_cast<std::size_t>(l_max) * d_emb, 0.0f);
  std::copy(ll.begin(), ll.end(), r.log_likelihoods.begin());
  std::copy(ent.begin(), ent.end(), r.entropies.begin());
  for (std::size_t t = 0; t < n; ++t) {
    if (emb[t].is_array() && emb[t].size() != static_cast<std::size_t>(d_emb)) {
      throw Error(line_error(line, "mixed d_emb: 'emb' row " + std::to_string(t) + " has " +
                                       std::to_string(emb[t].size()) +
                                       " values, header declares " + std::to_string(d_emb)));
    }
    auto row = parse_vector(emb[t], "emb", static_cast<std::size_t>(d_emb), line);
    std::copy(row.begin(), row.end(), r.embeddings.begin() + t * d_emb);
  }
  return r;
}

FloatJson record_to_json(const FeatureRecord& r, int d_emb) {
  const auto n = static_cast<std::size_t>(r.true_len);
  FloatJson obj = FloatJson::object();
  obj["id"] = r.id;
  obj["context_present"] = r.context_present;
  obj["true_len"] = r.true_len;
  obj["label"] = r.label;
  obj["ll"] = std::vector<float>(r.log_likelihoods.begin(), r.log_likelihoods.begin() + n);
  obj["ent"] = std::vector<float>(r.entropies.begin(), r.entropies.begin() + n);
  FloatJson rows = FloatJson::array();
  for (std::size_t t = 0; t < n; ++t) {
    auto row = r.embedding_row(static_cast<int>(t), d_emb);
    rows.push_back(std::vector<float>(row.begin(), row.end()));
  }
  obj["emb"] = std::move(rows);
  return obj;
}

}  // namespace

void validate_record(const FeatureRecord& r, int l_max, int d_emb) {
  // Ids end up as the first column of tab-separated score files.
  if (r.id.empty() || r.id.find_first_of("\t\n\r") != std::string::npos) {
    throw Error("record id must be nonempty and free of tabs/newlines: '" + r.id + "'");
  }
  if (r.true_len < 1 || r.true_len > l_max) {
    throw Error(record_error(r.id, "true_len " + std::to_string(r.true_len) +
                                       " outside [1, " + std::to_string(l_max) + "]"));
  }
  if (r.label != 0 && r.label != 1) throw Error(record_error(r.id, "label must be 0 or 1"));
  const auto L = static_cast<std::size_t>(l_max);
  if (r.log_likelihoods.size() != L || r.entropies.size() != L ||
      r.embeddings.size() != L * static_cast<std::size_t>(d_emb)) {
    throw Error(record_error(r.id, "mixed d_emb or l_max: buffer sizes do not match dataset"));
  }
  for (int t = 0; t < l_max; ++t) {
    const float ll = r.log_likelihoods[t];
    const float ent = r.entropies[t];
    if (!std::isfinite(ll) || !std::isfinite(ent)) {
      throw Error(record_error(r.id, "non-finite value at t=" + std::to_string(t)));
    }
    auto row = r.embedding_row(t, d_emb);
    for (float e : row) {
      if (!std::isfinite(e)) {
        throw Error(record_error(r.id, "non-finite embedding at t=" + std::to_string(t)));
      }
    }
    if (t < r.true_len) {
      if (ent < 0.0f) {
        throw Error(record_error(r.id, "negative entropy at t=" + std::to_string(t)));
      }
      if (ll > 0.0f) {
        throw Error(record_error(r.id, "positive log-likelihood at t=" + std::to_string(t)));
      }
    } else {
      bool zero = ll == 0.0f && ent == 0.0f;
      for (float e : row) zero = zero && e == 0.0f;
      if (!zero) {
        throw Error(record_error(r.id, "nonzero padding at t=" + std::to_string(t)));
      }
    }
  }
}

void validate_dataset(const Dataset& ds) {
  if (ds.l_max < 1) throw Error("dataset l_max must be positive");
  if (ds.d_emb < 1) throw Error("dataset d_emb must be positive");
  std::unordered_set<std::string> seen;
  seen.reserve(ds.records.size());
  for (const auto& r : ds.records) {
    validate_record(r, ds.l_max, ds.d_emb);
    if (!seen.insert(r.id).second) throw Error(record_error(r.id, "duplicate id"));
  }
}

Dataset read_dataset(std::istream& in) {
  std::string text;
  std::size_t line_no = 0;
  Dataset ds;

  if (!std::getline(in, text)) throw Error("line 1: missing HFJ header");
  ++line_no;
  FloatJson header;
  try {
    header = FloatJson::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(line_error(line_no, std::string("malformed header: ") + e.what()));
  }
  if (!header.is_object() || header.value("format", std::string{}) != "hfj") {
    throw Error(line_error(line_no, "field 'format' must be \"hfj\""));
  }
  const auto& version = require_field(header, "version", line_no);
  if (!version.is_number_integer() || version.get<int>() != kHfjVersion) {
    throw Error(line_error(line_no, "unsupported HFJ version"));
  }
  const auto& l_max = require_field(header, "l_max", line_no);
  const auto& d_emb = require_field(header, "d_emb", line_no);
  if (!l_max.is_number_integer() || l_max.get<std::int64_t>() < 1) {
    throw Error(line_error(line_no, "field 'l_max' must be a positive integer"));
  }
  if (!d_emb.is_number_integer() || d_emb.get<std::int64_t>() < 1) {
    throw Error(line_error(line_no, "field 'd_emb' must be a positive integer"));
  }
  ds.l_max = l_max.get<int>();
  ds.d_emb = d_emb.get<int>();

  std::unordered_set<std::string> seen;
  while (std::getline(in, text)) {
    ++line_no;
    if (text.empty()) continue;
    FloatJson obj;
    try {
      obj = FloatJson::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw Error(line_error(line_no, std::string("malformed JSON: ") + e.what()));
    }
    FeatureRecord r = parse_record(obj, ds.l_max, ds.d_emb, line_no);
    validate_record(r, ds.l_max, ds.d_emb);
    if (!seen.insert(r.id).second) throw Error(record_error(r.id, "duplicate id"));
    ds.records.push_back(std::move(r));
  }
  return ds;
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  validate_dataset(ds);
  FloatJson header = FloatJson::object();
  header["format"] = "hfj";
  header["version"] = kHfjVersion;
  header["l_max"] = ds.l_max;
  header["d_emb"] = ds.d_emb;
  out << header.dump() << '\n';
  for (const auto& r : ds.records) out << record_to_json(r, ds.d_emb).dump() << '\n';
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open dataset '" + path.string() + "'");
  return read_dataset(in);
}

void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ostringstream buf;
  write_dataset(ds, buf);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write dataset '" + path.string() + "'");
  out << buf.str();
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

PaddedSequence truncate_or_pad(std::span<const float> ll, std::span<const float> ent,
                               std::span<const float> emb, int d_emb, int l_max) {
  const std::size_t n = ll.size();
  if (n == 0) throw Error("cannot pad an empty sequence");
  if (ent.size() != n || emb.size() != n * static_cast<std::size_t>(d_emb)) {
    throw Error("log-likelihood, entropy and embedding lengths differ");
  }
  const std::size_t keep = std::min(n, static_cast<std::size_t>(l_max));
  PaddedSequence out;
  out.true_len = static_cast<int>(keep);
  out.log_likelihoods.assign(static_cast<std::size_t>(l_max), 0.0f);
  out.entropies.assign(static_cast<std::size_t>(l_max), 0.0f);
  out.embeddings.assign(static_cast<std::size_t>(l_max) * d_emb, 0.0f);
  std::copy_n(ll.begin(), keep, out.log_likelihoods.begin());
  std::copy_n(ent.begin(), keep, out.entropies.begin());
  std::copy_n(emb.begin(), keep * d_emb, out.embeddings.begin());
  return out;
}

FeatureRecord make_record(std::string id, bool context_present, int label,
                          std::span<const float> ll, std::span<const float> ent,
                          std::span<const float> emb, int d_emb, int l_max) {
  auto padded = truncate_or_pad(ll, ent, emb, d_emb, l_max);
  FeatureRecord r;
  r.id = std::move(id);
  r.context_present = context_present;
  r.label = label;
  r.true_len = padded.true_len;
  r.log_likelihoods = std::move(padded.log_likelihoods);
  r.entropies = std::move(padded.entropies);
  r.embeddings = std::move(padded.embeddings);
  validate_record(r, l_max, d_emb);
  return r;
}

}  // namespace halunet
