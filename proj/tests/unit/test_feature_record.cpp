#include <doctest.h>

#include <sstream>
#include <string>
#include <vector>

#include "halunet/feature_record.hpp"
#include "halunet/synth.hpp"

using namespace halunet;

namespace {

Dataset parse(const std::string& text) {
  std::istringstream in(text);
  return read_dataset(in);
}

std::string error_of(const std::string& text) {
  try {
    parse(text);
  } catch (const Error& e) {
    return e.what();
  }
  return {};
}

const char* kHeader = "{\"format\":\"hfj\",\"version\":1,\"l_max\":50,\"d_emb\":2}\n";

}  // namespace

TEST_CASE("empty file keeps d_emb from the header") {
  const Dataset ds = parse(kHeader);
  CHECK(ds.empty());
  CHECK(ds.d_emb == 2);
  CHECK(ds.l_max == 50);
}

TEST_CASE("short record is zero padded to l_max") {
  const Dataset ds = parse(std::string(kHeader) +
                           "{\"id\":\"a\",\"context_present\":true,\"true_len\":3,\"label\":1,"
                           "\"ll\":[-0.1,-0.2,-0.3],\"ent\":[0.5,0.6,0.7],"
                           "\"emb\":[[1,2],[3,4],[5,6]]}\n");
  REQUIRE(ds.size() == 1);
  const auto& r = ds.records[0];
  CHECK(r.true_len == 3);
  CHECK(r.label == 1);
  CHECK(r.context_present);
  REQUIRE(r.log_likelihoods.size() == 50);
  REQUIRE(r.embeddings.size() == 100);
  CHECK(r.log_likelihoods[2] == doctest::Approx(-0.3f));
  CHECK(r.embedding_row(2, 2)[1] == 6.0f);
  for (int t = 3; t < 50; ++t) {
    CHECK(r.log_likelihoods[t] == 0.0f);
    CHECK(r.entropies[t] == 0.0f);
    CHECK(r.embedding_row(t, 2)[0] == 0.0f);
    CHECK(r.embedding_row(t, 2)[1] == 0.0f);
  }
}

TEST_CASE("invalid records are rejected with a reason") {
  const std::string rec =
      "{\"id\":\"a\",\"context_present\":false,\"true_len\":2,\"label\":0,"
      "\"ll\":[-0.1,-0.2],\"ent\":[0.5,-0.1],\"emb\":[[1,2],[3,4]]}\n";
  CHECK(error_of(std::string(kHeader) + rec).find("negative entropy") != std::string::npos);

  const std::string pos_ll =
      "{\"id\":\"a\",\"context_present\":false,\"true_len\":1,\"label\":0,"
      "\"ll\":[0.3],\"ent\":[0.5],\"emb\":[[1,2]]}\n";
  CHECK(error_of(std::string(kHeader) + pos_ll).find("log-likelihood") != std::string::npos);

  const std::string wide =
      "{\"id\":\"a\",\"context_present\":false,\"true_len\":1,\"label\":0,"
      "\"ll\":[-0.3],\"ent\":[0.5],\"emb\":[[1,2,3]]}\n";
  CHECK(error_of(std::string(kHeader) + wide).find("d_emb") != std::string::npos);

  const std::string ok =
      "{\"id\":\"a\",\"context_present\":false,\"true_len\":1,\"label\":0,"
      "\"ll\":[-0.3],\"ent\":[0.5],\"emb\":[[1,2]]}\n";
  CHECK(error_of(std::string(kHeader) + ok + ok).find("duplicate") != std::string::npos);
  CHECK(error_of(std::string(kHeader) + "{not json\n").find("line 2") != std::string::npos);
  CHECK(error_of("{\"format\":\"hfj\",\"version\":2,\"l_max\":50,\"d_emb\":2}\n")
            .find("version") != std::string::npos);

  const std::string bad_label =
      "{\"id\":\"a\",\"context_present\":false,\"true_len\":1,\"label\":3,"
      "\"ll\":[-0.3],\"ent\":[0.5],\"emb\":[[1,2]]}\n";
  CHECK_FALSE(error_of(std::string(kHeader) + bad_label).empty());
}

TEST_CASE("write/read round trip is the identity and keeps order") {
  SynthConfig cfg;
  cfg.n_records = 20;
  cfg.d_emb = 4;
  cfg.seed = 9;
  Dataset ds = generate(cfg);
  // Boundary: a record with no padding.
  std::vector<float> ll(50, -0.5f), ent(50, 0.25f), emb(200, 0.1f);
  ds.records.push_back(make_record("full", true, 1, ll, ent, emb, 4));

  std::stringstream buf;
  write_dataset(ds, buf);
  const Dataset back = read_dataset(buf);
  CHECK(back == ds);
  REQUIRE(back.size() == ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) CHECK(back.records[i].id == ds.records[i].id);
  CHECK(back.records.back().true_len == 50);

  std::stringstream again;
  write_dataset(back, again);
  std::stringstream first;
  write_dataset(ds, first);
  CHECK(again.str() == first.str());
}

TEST_CASE("truncate_or_pad") {
  auto seq = [](int n) {
    std::vector<float> v(n);
    for (int i = 0; i < n; ++i) v[i] = -static_cast<float>(i + 1);
    return v;
  };
  auto run = [&](int n) {
    const auto ll = seq(n);
    std::vector<float> ent(n, 1.0f), emb(static_cast<std::size_t>(n) * 2, 2.0f);
    return truncate_or_pad(ll, ent, emb, 2, 50);
  };

  const auto two = run(2);
  CHECK(two.true_len == 2);
  CHECK(two.log_likelihoods[1] == -2.0f);
  for (int t = 2; t < 50; ++t) CHECK(two.log_likelihoods[t] == 0.0f);

  const auto fifty = run(50);
  CHECK(fifty.true_len == 50);
  CHECK(fifty.log_likelihoods == seq(50));

  const auto sixty = run(60);
  CHECK(sixty.true_len == 50);
  CHECK(sixty.log_likelihoods == seq(50));
  CHECK(sixty.embeddings.size() == 100);
}

TEST_CASE("make_record validates") {
  std::vector<float> ll{-0.1f}, ent{0.2f}, emb{1.0f, 2.0f};
  const auto r = make_record("x", false, 0, ll, ent, emb, 2);
  CHECK_NOTHROW(validate_record(r, 50, 2));
  std::vector<float> bad{-1.0f};
  CHECK_THROWS_AS(make_record("x", false, 0, ll, bad, emb, 2), Error);
  CHECK_THROWS_AS(make_record("", false, 0, ll, ent, emb, 2), Error);
}
