#include "halunet/synth.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "halunet/rng.hpp"

namespace halunet {
namespace {

constexpr double kEntropyMean = 0.5;
constexpr double kEntropyShift = 0.5;
constexpr double kNllMean = 0.3;
constexpr double kNllShift = 0.4;
constexpr double kNoise = 0.5;
constexpr double kSignal = 0.5;

struct World {
  std::vector<double> prototype;
  std::vector<double> axis_a, axis_b;  // orthonormal pair
};

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  for (double& x : v) x /= n;
}

World make_world(const SynthConfig& cfg) {
  Rng rng(cfg.world_seed);
  const auto d = static_cast<std::size_t>(cfg.d_emb);
  World w;
  w.prototype.resize(d);
  for (double& x : w.prototype) x = rng.normal();
  w.axis_a.resize(d);
  w.axis_b.resize(d);
  for (double& x : w.axis_a) x = rng.normal();
  for (double& x : w.axis_b) x = rng.normal();
  normalize(w.axis_a);
  if (d > 1) {
    double proj = 0.0;
    for (std::size_t i = 0; i < d; ++i) proj += w.axis_a[i] * w.axis_b[i];
    for (std::size_t i = 0; i < d; ++i) w.axis_b[i] -= proj * w.axis_a[i];
    normalize(w.axis_b);
  } else {
    w.axis_b = w.axis_a;
  }
  return w;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_records < 0) throw Error("synth: n_records must be >= 0");
  if (d_emb < 1) throw Error("synth: d_emb must be >= 1");
  if (l_max < 3) throw Error("synth: l_max must be >= 3");
  if (!(separability >= 0.0 && separability <= 1.0)) {
    throw Error("synth: separability must lie in [0, 1]");
  }
  if (!(hallucination_rate > 0.0 && hallucination_rate < 1.0)) {
    throw Error("synth: hallucination_rate must lie in (0, 1)");
  }
}

Dataset generate(const SynthConfig& cfg) {
  cfg.validate();
  const World world = make_world(cfg);
  Rng rng(cfg.seed);
  const double s = cfg.separability;
  const auto d = static_cast<std::size_t>(cfg.d_emb);

  Dataset ds;
  ds.l_max = cfg.l_max;
  ds.d_emb = cfg.d_emb;
  ds.records.reserve(static_cast<std::size_t>(cfg.n_records));

  std::vector<float> ll, ent, emb;
  for (int i = 0; i < cfg.n_records; ++i) {
    const int label = rng.uniform() < cfg.hallucination_rate ? 1 : 0;
    const bool context = rng.uniform() < 0.5;
    const int len = 3 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.l_max - 2)));
    // Per-record direction in the label subspace.
    const double angle = rng.uniform(0.0, 1.0);
    std::vector<double> dir(d);
    for (std::size_t k = 0; k < d; ++k) {
      dir[k] = std::cos(angle) * world.axis_a[k] + std::sin(angle) * world.axis_b[k];
    }

    const double ent_mean = kEntropyMean + kEntropyShift * s * label;
    const double nll_mean = kNllMean + kNllShift * s * label;
    const double sigma = kNoise * (1.0 + 0.5 * s * label);
    ll.assign(static_cast<std::size_t>(len), 0.0f);
    ent.assign(static_cast<std::size_t>(len), 0.0f);
    emb.assign(static_cast<std::size_t>(len) * d, 0.0f);
    for (int t = 0; t < len; ++t) {
      ent[t] = static_cast<float>(rng.exponential(ent_mean));
      ll[t] = -static_cast<float>(rng.exponential(nll_mean));
      const double push = label * s * kSignal * (1.0 + 0.5 * rng.normal());
      for (std::size_t k = 0; k < d; ++k) {
        emb[t * d + k] =
            static_cast<float>(world.prototype[k] + sigma * rng.normal() + push * dir[k]);
      }
    }
    ds.records.push_back(make_record("synth-" + std::to_string(i), context, label, ll, ent, emb,
                                     cfg.d_emb, cfg.l_max));
  }
  return ds;
}

}  // namespace halunet
