#include "qdscan/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace qdscan {

void ObservationSet::add(Pixel x, double y) {
  if (!mask_.contains(x)) throw DomainError("observation outside the grid");
  if (mask_[x]) throw DomainError("location already measured");
  if (!std::isfinite(y)) throw DomainError("non-finite observation value");
  mask_[x] = 1;
  locations_.push_back(x);
  values_.push_back(y);
}

ConditioningInput ConditioningInput::from_map(const CurrentMap& map, std::span<const Pixel> pixels) {
  ConditioningInput cond;
  cond.pixels.assign(pixels.begin(), pixels.end());
  cond.values.reserve(pixels.size());
  for (Pixel p : pixels) cond.values.push_back(map.values[p]);
  return cond;
}

void ReconstructionEnsemble::validate() const {
  if (members.empty()) throw DegenerateEnsembleError("ensemble has no members");
  if (weights.size() != members.size()) throw DomainError("weight count does not match members");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw DegenerateEnsembleError("invalid weight");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw DegenerateEnsembleError("weights do not sum to one");
  const int rows = members.front().values.rows();
  const int cols = members.front().values.cols();
  for (const auto& m : members)
    if (m.values.rows() != rows || m.values.cols() != cols)
      throw DomainError("ensemble members differ in resolution");
}

double log_likelihood(const ObservationSet& obs, const CurrentMap& recon, double lambda,
                      std::size_t begin, std::size_t end) {
  end = std::min(end, obs.size());
  const auto locs = obs.locations();
  const auto vals = obs.values();
  double residual = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    if (!recon.values.contains(locs[i])) throw DomainError("observation outside reconstruction");
    residual += std::abs(vals[i] - recon.values[locs[i]]);
  }
  return -lambda * residual;
}

std::vector<double> normalize_log_weights(std::span<const double> log_weights) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double lw : log_weights)
    if (!std::isnan(lw)) peak = std::max(peak, lw);
  if (!std::isfinite(peak)) throw DegenerateEnsembleError("all posterior weights vanished");
  std::vector<double> w(log_weights.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::isnan(log_weights[i]) ? 0.0 : std::exp(log_weights[i] - peak);
    sum += w[i];
  }
  for (double& x : w) x /= sum;
  return w;
}

std::vector<double> posterior_weights(const ReconstructionEnsemble& ensemble,
                                      const ObservationSet& obs) {
  if (obs.size() < ensemble.n_s) throw DomainError("fewer observations than at resampling");
  std::vector<double> logw(ensemble.size());
  for (std::size_t m = 0; m < ensemble.size(); ++m)
    logw[m] = log_likelihood(obs, ensemble.members[m], ensemble.lambda, ensemble.n_s);
  return normalize_log_weights(logw);
}

std::vector<double> update_weights_incremental(const ReconstructionEnsemble& ensemble,
                                               const ObservationSet& obs, Pixel x, double y) {
  if (obs.contains(x)) throw DomainError("location already measured");
  std::vector<double> logw(ensemble.size());
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    const double w = ensemble.weights[m];
    logw[m] = w > 0.0 ? std::log(w) - ensemble.lambda * std::abs(y - ensemble.members[m].values[x])
                      : -std::numeric_limits<double>::infinity();
  }
  return normalize_log_weights(logw);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

ReconstructionEnsemble prior_ensemble(const GenerativeBackend& backend,
                                      const ConditioningInput& cond, std::size_t members,
                                      double lambda, std::uint64_t seed) {
  if (members == 0) throw ConfigError("ensemble size must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  ReconstructionEnsemble ens;
  ens.lambda = lambda;
  ens.latents.resize(members);
  for (auto& z : ens.latents) {
    z.resize(backend.latent_dim());
    for (double& v : z) v = normal(rng);
  }
  ens.members.reserve(members);
  for (const auto& z : ens.latents) ens.members.push_back(backend.decode(z, cond));
  ens.weights.assign(members, 1.0 / static_cast<double>(members));
  return ens;
}

std::vector<std::size_t> systematic_resample(std::span<const double> weights, double u) {
  const std::size_t m = weights.size();
  if (m == 0) throw DegenerateEnsembleError("no weights to resample");
  if (!(u >= 0.0 && u < 1.0)) throw DomainError("systematic_resample: u must lie in [0, 1)");
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw DegenerateEnsembleError("weights sum to zero");
  std::vector<std::size_t> out(m);
  double cumulative = weights[0] / total * m;
  std::size_t j = 0;
  for (std::size_t k = 0; k < m; ++k) {
    const double position = u + static_cast<double>(k);
    while (position >= cumulative && j + 1 < m) cumulative += weights[++j] / total * m;
    out[k] = j;
  }
  return out;
}

ReconstructionEnsemble mh_resample(const GenerativeBackend& backend,
                                   const ReconstructionEnsemble& ensemble,
                                   const ObservationSet& obs, const ConditioningInput& cond,
                                   const MhOptions& options, std::uint64_t seed,
                                   MhDiagnostics* diagnostics) {
  if (options.iterations < 1) throw ConfigError("MH needs at least one iteration");
  if (!(options.proposal_scale >= 0.0)) throw ConfigError("proposal scale must be nonnegative");
  const std::size_t chains = ensemble.latents.size();
  if (chains == 0) throw DomainError("mh_resample needs latent vectors");
  const std::size_t dim = backend.latent_dim();
  const double lambda = ensemble.lambda;
  const auto locs = obs.locations();
  const auto vals = obs.values();
  const bool needs_decode = lambda != 0.0 && !locs.empty();

  std::vector<Latent> finals(chains);
  std::vector<double> acceptance(chains, 0.0);
  std::vector<double> trace(chains * static_cast<std::size_t>(options.iterations), 0.0);
  std::vector<std::size_t> clamped(chains, 0);

  std::vector<std::size_t> start(chains);
  std::iota(start.begin(), start.end(), std::size_t{0});
  if (options.weighted_starts && ensemble.weights.size() == chains) {
    std::mt19937_64 rng(mix_seed(seed, chains));
    start = systematic_resample(ensemble.weights, std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  }

  parallel_for(chains, options.threads, [&](std::size_t c) {
    std::mt19937_64 rng(mix_seed(seed, c));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    std::vector<double> decoded(locs.size());

    auto log_lik = [&](const Latent& z) {
      if (!needs_decode) return 0.0;
      DecodeDiagnostics d;
      backend.decode_at(z, cond, locs, decoded, &d);
      if (d.clamped) ++clamped[c];
      double residual = 0.0;
      for (std::size_t i = 0; i < locs.size(); ++i) residual += std::abs(vals[i] - decoded[i]);
      return -lambda * residual;
    };
    auto log_prior = [](const Latent& z) {
      double s = 0.0;
      for (double v : z) s += v * v;
      return -0.5 * s;
    };

    Latent z = ensemble.latents[start[c]];
    if (z.size() != dim) throw DomainError("latent dimension mismatch");
    double current = log_prior(z) + log_lik(z);
    Latent proposal(dim);
    std::size_t accepted = 0;
    for (int it = 0; it < options.iterations; ++it) {
      for (std::size_t k = 0; k < dim; ++k) proposal[k] = z[k] + options.proposal_scale * normal(rng);
      const double candidate = log_prior(proposal) + log_lik(proposal);
      const double u = uniform(rng);
      if (std::log(u) < candidate - current) {
        z.swap(proposal);
        current = candidate;
        ++accepted;
      }
      trace[c * options.iterations + it] = current - log_prior(z);
    }
    acceptance[c] = static_cast<double>(accepted) / options.iterations;
    finals[c] = std::move(z);
  });

  ReconstructionEnsemble out;
  out.lambda = lambda;
  out.n_s = obs.size();
  out.latents = std::move(finals);
  out.members.resize(chains);
  parallel_for(chains, options.threads,
               [&](std::size_t c) { out.members[c] = backend.decode(out.latents[c], cond); });
  out.weights.assign(chains, 1.0 / static_cast<double>(chains));

  if (diagnostics) {
    diagnostics->acceptance_rate = std::move(acceptance);
    diagnostics->mean_loglik.assign(options.iterations, 0.0);
    for (std::size_t c = 0; c < chains; ++c)
      for (int it = 0; it < options.iterations; ++it)
        diagnostics->mean_loglik[it] += trace[c * options.iterations + it] / chains;
    diagnostics->clamped_decodes = std::accumulate(clamped.begin(), clamped.end(), std::size_t{0});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Noise augmentation
// ---------------------------------------------------------------------------

double noise_multiplier(double signal_power, double noise_power, double snr) {
  if (!(noise_power > 0.0)) throw DomainError("noise profile has zero power");
  if (!(snr > 0.0)) throw DomainError("SNR must be positive");
  return std::sqrt(signal_power / (snr * noise_power));
}

ReconstructionEnsemble augment_noisy(const ReconstructionEnsemble& ensemble,
                                     std::span<const NoiseProfile> profiles,
                                     std::span<const double> snr_levels) {
  if (profiles.empty() || snr_levels.empty()) throw ConfigError("augmentation needs profiles and SNR levels");
  std::vector<double> noise_power;
  for (const auto& p : profiles) {
    const double power = p.power();
    if (!(power > 0.0)) throw DomainError("noise profile has zero power");
    noise_power.push_back(power);
  }
  const std::size_t variants = profiles.size() * snr_levels.size();
  ReconstructionEnsemble out;
  out.lambda = ensemble.lambda;
  out.n_s = ensemble.n_s;
  out.members.reserve(ensemble.size() * variants);
  out.weights.reserve(ensemble.size() * variants);
  for (std::size_t m = 0; m < ensemble.size(); ++m) {
    const CurrentMap& base = ensemble.members[m];
    double signal = 0.0;
    for (double v : base.values.flat()) signal += v * v;
    for (std::size_t j = 0; j < profiles.size(); ++j) {
      const auto noise = profiles[j].values.flat();
      if (profiles[j].values.rows() != base.values.rows() ||
          profiles[j].values.cols() != base.values.cols())
        throw DomainError("noise profile resolution differs from reconstruction");
      for (double snr : snr_levels) {
        const double k = noise_multiplier(signal, noise_power[j], snr);
        CurrentMap variant = base;
        auto flat = variant.values.flat();
        for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += k * noise[i];
        out.members.push_back(std::move(variant));
        out.weights.push_back(ensemble.weights[m] / static_cast<double>(variants));
      }
    }
  }
  return out;
}

}  // namespace qdscan
