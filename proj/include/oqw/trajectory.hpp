#ifndef OQW_TRAJECTORY_HPP
#define OQW_TRAJECTORY_HPP

// Independent Monte Carlo verification layer: discrete quantum trajectories
// with site monitoring, Poisson-timed measured semigroup evolution, the
// continuous-time jump chain with resolvent-averaged branch states, exact
// truncated path enumeration, and the cross-check of the continuous-time
// mean-hitting identity against sampled return times.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ctime.hpp"
#include "linalg.hpp"
#include "walk.hpp"

namespace oqwalk {

// ---------------------------------------------------------------------------
// deterministic counter-based streams

// Finalizer of the splitmix64 step; full-period bijective mixer.
inline std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stream seed for one trajectory: a counter-based derivation from
// (master seed, trajectory index) so serial and parallel runs agree.
inline std::uint64_t stream_seed(std::uint64_t master_seed, std::uint64_t index) {
  return mix64(master_seed + 0x9e3779b97f4a7c15ULL * (index + 1));
}

inline std::mt19937_64 trajectory_stream(std::uint64_t master_seed, std::uint64_t index) {
  return std::mt19937_64(stream_seed(master_seed, index));
}

// ---------------------------------------------------------------------------
// sample statistics

struct McEstimate {
  double mean = 0;
  double std_error = 0;  // sample stddev / sqrt(count)
  long long count = 0;
};

// Streaming mean/variance accumulator with an associative, commutative merge.
class McAccumulator {
 public:
  void add(double x) {
    ++n_;
    const double d = x - mean_;
    mean_ += d / double(n_);
    m2_ += d * (x - mean_);
  }

  void merge(const McAccumulator& o) {
    if (o.n_ == 0) return;
    if (n_ == 0) {
      *this = o;
      return;
    }
    const double d = o.mean_ - mean_;
    const double n = double(n_), m = double(o.n_);
    mean_ += d * m / (n + m);
    m2_ += o.m2_ + d * d * n * m / (n + m);
    n_ += o.n_;
  }

  long long count() const { return n_; }

  McEstimate estimate() const {
    McEstimate e;
    e.count = n_;
    e.mean = mean_;
    if (n_ > 1) e.std_error = std::sqrt(m2_ / double(n_ - 1) / double(n_));
    return e;
  }

 private:
  long long n_ = 0;
  double mean_ = 0;
  double m2_ = 0;
};

// ---------------------------------------------------------------------------
// trajectory records

template <class S>
struct TrajectoryPoint {
  int site = 0;
  Mat<S> density;  // normalized internal state after the event
  S time = 0;      // step count (discrete) or elapsed time (continuous)
};

template <class S>
struct TrajectoryRecord {
  std::uint64_t seed = 0;  // stream seed the trajectory was drawn from
  std::vector<TrajectoryPoint<S>> points;
  bool hit = false;
  S hit_time = 0;            // steps or elapsed time when `hit`
  S branch_defect = 0;       // worst |sum of branch probabilities - 1|
};

// ---------------------------------------------------------------------------
// discrete quantum trajectory

template <class S>
struct StepSample {
  int site = 0;
  Mat<S> density;
  S probability = 0;  // probability of the branch that was taken
  S branch_sum = 0;   // total branch mass before the draw
};

// One monitored step from site j: branch i is drawn with probability
// Tr(B_ij rho B_ij*) and the internal state is the normalized conjugation.
// Branches below 1e-14 are merged into the largest branch before the draw.
template <class S>
StepSample<S> discrete_trajectory_step(const WalkModel<S>& w, int j, const Mat<S>& rho,
                                       std::mt19937_64& rng) {
  const int k = w.sites;
  std::vector<Mat<S>> cand(static_cast<size_t>(k));
  std::vector<S> p(size_t(k), S(0));
  S total = 0;
  int largest = 0;
  for (int i = 0; i < k; ++i) {
    cand[size_t(i)] = w.block(i, j) * rho * w.block(i, j).adjoint();
    p[size_t(i)] = std::max(S(0), std::real(cand[size_t(i)].trace()));
    total += p[size_t(i)];
    if (p[size_t(i)] > p[size_t(largest)]) largest = i;
  }
  if (!(total > S(1e-14)))
    throw std::runtime_error("discrete_trajectory_step: all branches vanish");
  for (int i = 0; i < k; ++i)
    if (i != largest && p[size_t(i)] < S(1e-14)) {
      p[size_t(largest)] += p[size_t(i)];
      p[size_t(i)] = S(0);
    }
  std::uniform_real_distribution<S> uni(S(0), S(1));
  const S u = uni(rng) * total;
  S cum = 0;
  int chosen = largest;
  for (int i = 0; i < k; ++i) {
    cum += p[size_t(i)];
    if (u < cum) {
      chosen = i;
      break;
    }
  }
  StepSample<S> out;
  out.site = chosen;
  out.branch_sum = total;
  out.probability = p[size_t(chosen)];
  const S tr = std::real(cand[size_t(chosen)].trace());
  out.density = hermitize<S>(cand[size_t(chosen)]) / tr;
  return out;
}

// Full monitored trajectory; terminates on the first visit to `target` or at
// the step horizon. `record_points` controls whether the path is stored.
template <class S>
TrajectoryRecord<S> discrete_trajectory(const WalkModel<S>& w, int target, int from,
                                        const Mat<S>& rho, long long horizon,
                                        std::uint64_t master_seed, std::uint64_t index,
                                        bool record_points = true) {
  TrajectoryRecord<S> rec;
  rec.seed = stream_seed(master_seed, index);
  std::mt19937_64 rng(rec.seed);
  int site = from;
  Mat<S> state = rho;
  if (record_points) rec.points.push_back({site, state, S(0)});
  for (long long step = 1; step <= horizon; ++step) {
    auto s = discrete_trajectory_step<S>(w, site, state, rng);
    rec.branch_defect = std::max(rec.branch_defect, std::abs(s.branch_sum - S(1)));
    site = s.site;
    state = std::move(s.density);
    if (record_points) rec.points.push_back({site, state, S(step)});
    if (site == target) {
      rec.hit = true;
      rec.hit_time = S(step);
      break;
    }
  }
  return rec;
}

struct McHitting {
  McEstimate probability;  // mean of the hit indicator
  McEstimate mean_time;    // mean hitting time over trajectories that hit
  double censored_fraction = 0;
  long long samples = 0;
  double branch_defect = 0;  // worst |branch sum - 1| seen across the run
};

// Empirical first-visit probability and mean hitting time by direct
// simulation; trajectories that outlive the horizon are reported as censored.
template <class S>
McHitting mc_hitting(const WalkModel<S>& w, int target, int from, const Mat<S>& rho,
                     long long samples, long long horizon = 10000,
                     std::uint64_t master_seed = 2026) {
  if (samples < 1) throw std::invalid_argument("mc_hitting: needs samples >= 1");
  McAccumulator prob, time;
  long long censored = 0;
  double defect = 0;
  for (long long s = 0; s < samples; ++s) {
    auto rec = discrete_trajectory<S>(w, target, from, rho, horizon, master_seed,
                                      std::uint64_t(s), false);
    defect = std::max(defect, double(rec.branch_defect));
    prob.add(rec.hit ? 1.0 : 0.0);
    if (rec.hit)
      time.add(double(rec.hit_time));
    else
      ++censored;
  }
  McHitting out;
  out.probability = prob.estimate();
  out.mean_time = time.estimate();
  out.censored_fraction = double(censored) / double(samples);
  out.samples = samples;
  out.branch_defect = defect;
  return out;
}

// ---------------------------------------------------------------------------
// Poisson-measured semigroup evolution

// One trajectory of the measured scheme: exponential(lambda) gaps, semigroup
// evolution of the stacked state, and a full position measurement at each
// event (which reproduces the target/avoid statistics in expectation).
template <class S>
TrajectoryRecord<S> poisson_trajectory(const GeneratorModel<S>& g, int f, int from,
                                       const Mat<S>& rho, S lambda, long long horizon_jumps,
                                       std::uint64_t master_seed, std::uint64_t index,
                                       bool record_points = false,
                                       std::vector<S>* gap_sink = nullptr,
                                       std::size_t gap_cap = 10000) {
  TrajectoryRecord<S> rec;
  rec.seed = stream_seed(master_seed, index);
  std::mt19937_64 rng(rec.seed);
  std::exponential_distribution<S> gap(lambda);
  std::uniform_real_distribution<S> uni(S(0), S(1));
  const bool blocky = !g.vertex_diagonal();
  const int nv = g.vertices();
  int site = from;
  Mat<S> state = rho;
  S t = 0;
  if (record_points && blocky) rec.points.push_back({site, state, S(0)});
  for (long long jump = 1; jump <= horizon_jumps; ++jump) {
    const S dt = gap(rng);
    if (gap_sink && gap_sink->size() < gap_cap) gap_sink->push_back(dt);
    t += dt;
    const Vec<S> evolved = g.propagator().apply(
        dt, blocky ? g.start_vector(site, state) : g.start_vector(site));
    S total = 0;
    std::vector<S> mass(static_cast<size_t>(nv), S(0));
    for (int v = 0; v < nv; ++v) {
      mass[size_t(v)] = std::max(S(0), g.vertex_mass(evolved, v));
      total += mass[size_t(v)];
    }
    if (!(total > S(1e-14)))
      throw std::runtime_error("poisson_trajectory: state lost all mass");
    rec.branch_defect = std::max(rec.branch_defect, std::abs(total - S(1)));
    const S u = uni(rng) * total;
    S cum = 0;
    int chosen = nv - 1;
    for (int v = 0; v < nv; ++v) {
      cum += mass[size_t(v)];
      if (u < cum) {
        chosen = v;
        break;
      }
    }
    site = chosen;
    if (blocky) {
      Mat<S> blk = hermitize<S>(g.space().block_of(evolved, site));
      state = blk / blk.trace();
      if (record_points) rec.points.push_back({site, state, t});
    }
    if (site == f) {
      rec.hit = true;
      rec.hit_time = t;
      break;
    }
  }
  return rec;
}

// Empirical Poisson-monitored hitting probability and mean hitting time.
template <class S>
McHitting mc_poisson_hitting(const GeneratorModel<S>& g, int f, int from, const Mat<S>& rho,
                             S lambda, long long samples, long long horizon_jumps = 10000,
                             std::uint64_t master_seed = 2026,
                             std::vector<S>* gap_sink = nullptr,
                             std::size_t gap_cap = 10000) {
  if (samples < 1) throw std::invalid_argument("mc_poisson_hitting: needs samples >= 1");
  if (!(lambda > S(0))) throw std::invalid_argument("mc_poisson_hitting: needs lambda > 0");
  McAccumulator prob, time;
  long long censored = 0;
  double defect = 0;
  for (long long s = 0; s < samples; ++s) {
    auto rec = poisson_trajectory<S>(g, f, from, rho, lambda, horizon_jumps, master_seed,
                                     std::uint64_t(s), false, gap_sink, gap_cap);
    defect = std::max(defect, double(rec.branch_defect));
    prob.add(rec.hit ? 1.0 : 0.0);
    if (rec.hit)
      time.add(double(rec.hit_time));
    else
      ++censored;
  }
  McHitting out;
  out.probability = prob.estimate();
  out.mean_time = time.estimate();
  out.censored_fraction = double(censored) / double(samples);
  out.samples = samples;
  out.branch_defect = defect;
  return out;
}

template <class S>
McHitting mc_poisson_hitting(const GeneratorModel<S>& g, int f, int from, S lambda,
                             long long samples, long long horizon_jumps = 10000,
                             std::uint64_t master_seed = 2026) {
  const int n = g.space().dim();
  const Mat<S> rho = Mat<S>::Identity(n, n) / S(n);
  return mc_poisson_hitting<S>(g, f, from, rho, lambda, samples, horizon_jumps,
                               master_seed);
}

// Eliminates the O(1/lambda) monitoring bias of a rate pair (lambda, 2*lambda)
// under the a + b/lambda law of the monitored mean hitting time.
inline McEstimate richardson_pair(const McEstimate& at_lambda, const McEstimate& at_twice) {
  McEstimate out;
  out.mean = 2 * at_twice.mean - at_lambda.mean;
  out.std_error = std::sqrt(4 * at_twice.std_error * at_twice.std_error +
                            at_lambda.std_error * at_lambda.std_error);
  out.count = std::min(at_lambda.count, at_twice.count);
  return out;
}

// ---------------------------------------------------------------------------
// continuous-time jump chain

// Samples jumps of the continuous-time chain on (vertex, internal state):
// exponential holding at the state-dependent exit rate, target drawn from the
// instantaneous jump rates, and the internal state replaced by the matching
// block of the resolvent-averaged evolution at that exit rate.  Resolvent
// factorizations are cached per quantized exit rate, which collapses to one
// solve per vertex for constant-rate models.
template <class S>
class CtJumpSampler {
 public:
  explicit CtJumpSampler(const GeneratorModel<S>& g) : g_(&g) {
    if (g.kind() == GeneratorKind::graph_induced)
      throw std::invalid_argument(
          "ct jump chain: graph-induced generators have no autonomous vertex "
          "process; sample the measured evolution at a finite rate instead");
  }

  struct Jump {
    int site = 0;
    Mat<S> density;
    S wait = 0;
    S branch_defect = 0;  // |sum of jump probabilities - 1|
  };

  Jump step(int j, const Mat<S>& rho, std::mt19937_64& rng) {
    const auto r = g_->vertex_diagonal() ? rates<S>(*g_, j) : rates<S>(*g_, j, rho);
    const S q = r.exit_rate;
    if (!(q > S(1e-12)))
      throw std::runtime_error("ct jump chain: vertex " + std::to_string(j) +
                               " has vanishing exit rate");
    Jump out;
    std::exponential_distribution<S> hold(q);
    out.wait = hold(rng);
    const int nv = g_->vertices();
    std::vector<S> p(size_t(nv), S(0));
    S total = 0;
    int largest = 0;
    for (int l = 0; l < nv; ++l) {
      if (l == j) continue;
      p[size_t(l)] = std::max(S(0), r.jump_rate[l]);
      total += p[size_t(l)];
      if (p[size_t(l)] > p[size_t(largest)]) largest = l;
    }
    if (!(total > S(0))) throw std::runtime_error("ct jump chain: no open branch");
    out.branch_defect = std::abs(total / q - S(1));
    for (int l = 0; l < nv; ++l)
      if (l != largest && p[size_t(l)] > S(0) && p[size_t(l)] < S(1e-14) * total) {
        p[size_t(largest)] += p[size_t(l)];
        p[size_t(l)] = S(0);
      }
    std::uniform_real_distribution<S> uni(S(0), S(1));
    const S u = uni(rng) * total;
    S cum = 0;
    int chosen = largest;
    for (int l = 0; l < nv; ++l) {
      cum += p[size_t(l)];
      if (p[size_t(l)] > S(0) && u < cum) {
        chosen = l;
        break;
      }
    }
    out.site = chosen;
    if (!g_->vertex_diagonal()) {
      const Vec<S> sigma = resolvent_average(q)->solve(g_->start_vector(j, rho));
      Mat<S> blk = hermitize<S>(g_->space().block_of(sigma, chosen));
      const S tr = std::real(blk.trace());
      if (!(tr > S(1e-14)))
        throw std::runtime_error("ct jump chain: branch state has vanishing trace");
      out.density = blk / tr;
    }
    return out;
  }

 private:
  using Factorization = Eigen::PartialPivLU<Mat<S>>;

  std::shared_ptr<Factorization> resolvent_average(S q) {
    const long long key = std::llround(double(q) * 1e12);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    const S quantized = S(double(key) / 1e12);
    const auto n = g_->lhat().rows();
    auto lu = std::make_shared<Factorization>(
        Mat<S>(Mat<S>::Identity(n, n) - g_->lhat() / Cx<S>(quantized)));
    if (cache_.size() > 256) cache_.clear();
    cache_.emplace(key, lu);
    return lu;
  }

  const GeneratorModel<S>* g_;
  std::unordered_map<long long, std::shared_ptr<Factorization>> cache_;
};

// Continuous-time trajectory to the first arrival at `target`; starting at
// the target itself samples the first return time.
template <class S>
TrajectoryRecord<S> ct_trajectory(const GeneratorModel<S>& g, CtJumpSampler<S>& sampler,
                                  int target, int from, const Mat<S>& rho,
                                  long long horizon_jumps, std::uint64_t master_seed,
                                  std::uint64_t index, bool record_points = false) {
  TrajectoryRecord<S> rec;
  rec.seed = stream_seed(master_seed, index);
  std::mt19937_64 rng(rec.seed);
  int site = from;
  Mat<S> state = rho;
  S t = 0;
  if (record_points) rec.points.push_back({site, state, S(0)});
  for (long long jump = 1; jump <= horizon_jumps; ++jump) {
    auto s = sampler.step(site, state, rng);
    rec.branch_defect = std::max(rec.branch_defect, s.branch_defect);
    t += s.wait;
    site = s.site;
    if (s.density.size() > 0) state = std::move(s.density);
    if (record_points) rec.points.push_back({site, state, t});
    if (site == target) {
      rec.hit = true;
      rec.hit_time = t;
      break;
    }
  }
  return rec;
}

// Empirical continuous-time hitting (or, with target == from, return) times.
template <class S>
McHitting mc_ct_hitting(const GeneratorModel<S>& g, int target, int from, const Mat<S>& rho,
                        long long samples, long long horizon_jumps = 100000,
                        std::uint64_t master_seed = 2026, std::uint64_t stream_offset = 0) {
  if (samples < 1) throw std::invalid_argument("mc_ct_hitting: needs samples >= 1");
  CtJumpSampler<S> sampler(g);
  McAccumulator prob, time;
  long long censored = 0;
  double defect = 0;
  for (long long s = 0; s < samples; ++s) {
    auto rec = ct_trajectory<S>(g, sampler, target, from, rho, horizon_jumps, master_seed,
                                stream_offset + std::uint64_t(s), false);
    defect = std::max(defect, double(rec.branch_defect));
    prob.add(rec.hit ? 1.0 : 0.0);
    if (rec.hit)
      time.add(double(rec.hit_time));
    else
      ++censored;
  }
  McHitting out;
  out.probability = prob.estimate();
  out.mean_time = time.estimate();
  out.censored_fraction = double(censored) / double(samples);
  out.samples = samples;
  out.branch_defect = defect;
  return out;
}

// ---------------------------------------------------------------------------
// exact truncated path enumeration

template <class S>
struct PathEnumeration {
  S probability = 0;       // exact first-visit mass over paths of length <= horizon
  S mean_time = 0;         // exact r-weighted mass over the same paths
  S probability_tail = 0;  // bound on the first-visit mass beyond the horizon
  S mean_time_tail = 0;    // bound on the missing r-weighted mass
  long long branch_count = 0;  // path extensions explored (budget guard)
};

// Exact truncated first-passage sums by raw block products along every
// monitored path, with a spectral tail bound continued through the assembled
// superoperator beyond the horizon.
template <class S>
PathEnumeration<S> enumerate_paths(const WalkModel<S>& w, int target, int from,
                                   const Mat<S>& rho, int horizon,
                                   long long budget = 10000000) {
  if (horizon < 1) throw std::invalid_argument("enumerate_paths: needs horizon >= 1");
  struct Open {
    int site;
    Mat<S> v;
  };
  PathEnumeration<S> out;
  std::vector<Open> frontier{{from, Mat<S>::Identity(w.dim, w.dim)}};
  for (int r = 1; r <= horizon && !frontier.empty(); ++r) {
    std::vector<Open> next;
    next.reserve(frontier.size() * size_t(w.sites));
    for (const auto& path : frontier) {
      for (int l = 0; l < w.sites; ++l) {
        if (w.block(l, path.site).isZero(S(0))) continue;
        if (++out.branch_count > budget)
          throw std::runtime_error("enumerate_paths: path budget exceeded at length " +
                                   std::to_string(r));
        Mat<S> ext = w.block(l, path.site) * path.v;
        if (l == target) {
          const S mass = std::real((ext * rho * ext.adjoint()).trace());
          out.probability += mass;
          out.mean_time += S(r) * mass;
        } else {
          next.push_back({l, std::move(ext)});
        }
      }
    }
    frontier = std::move(next);
  }

  // Surviving mass, folded into per-site states and continued as a
  // superoperator iteration; the geometric remainder uses the spectral
  // radius of the monitored map.
  const SiteSpace<S> sp(w.sites, w.dim);
  SiteState<S> surv(size_t(w.sites), Mat<S>::Zero(w.dim, w.dim));
  for (const auto& path : frontier) surv[size_t(path.site)] += path.v * rho * path.v.adjoint();
  Vec<S> y = sp.stack(surv);
  S mass = std::real(sp.total_trace(y));
  if (!(mass > S(1e-15)))
    return out;

  const Mat<S> phi = block_superoperator<S>(w);
  const Mat<S> monitored = sp.complement(target) * phi;
  const S sr = spectral_radius<S>(monitored);
  long long r = horizon;
  S tail_p = 0, tail_m = 0;
  const long long cap = horizon + 200000;
  while (mass > S(1e-15) && r < cap) {
    ++r;
    Vec<S> z = phi * y;
    const S q = sp.site_probability(z, target);
    tail_p += q;
    tail_m += S(double(r)) * q;
    z.segment(target * sp.block_size(), sp.block_size()).setZero();
    y = std::move(z);
    mass = std::real(sp.total_trace(y));
    if (sr >= S(1) - S(1e-9) && r > horizon + 1000) break;
  }
  tail_p += mass;
  if (mass > S(0) && sr >= S(1) - S(1e-9))
    tail_m = std::numeric_limits<S>::infinity();
  else
    tail_m += mass * (S(double(r)) + S(1) / (S(1) - sr));
  // inflate by the floating-point slop of the continuation so the bound stays
  // an upper bound after roundoff
  out.probability_tail = tail_p + S(1e-14) + S(1e-12) * tail_p;
  out.mean_time_tail = tail_m + S(1e-12) + S(1e-12) * tail_m;
  return out;
}

// ---------------------------------------------------------------------------
// distribution check for the measured scheme

struct KsResult {
  double statistic = 0;
  double critical = 0;  // asymptotic 1% point, 1.628 / sqrt(n)
  long long count = 0;
  bool pass = false;
};

// Kolmogorov-Smirnov distance of observed gaps against exponential(lambda).
inline KsResult ks_exponential(std::vector<double> gaps, double lambda) {
  if (gaps.empty()) throw std::invalid_argument("ks_exponential: no samples");
  std::sort(gaps.begin(), gaps.end());
  const double n = double(gaps.size());
  double d = 0;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const double f = 1.0 - std::exp(-lambda * gaps[i]);
    d = std::max(d, std::max(f - double(i) / n, double(i + 1) / n - f));
  }
  KsResult out;
  out.statistic = d;
  out.count = gaps.size();
  out.critical = 1.628 / std::sqrt(n);
  out.pass = d < out.critical;
  return out;
}

// ---------------------------------------------------------------------------
// continuous-time mean-hitting identity, verified against sampled returns

template <class S>
struct MhtfCtCheck {
  S lhs = 0;       // extrapolated mean hitting time of i from (j, rho)
  S rhs = 0;       // rate-scaled return functional through the fundamental blocks
  S sigma = 0;     // Monte Carlo standard error propagated into rhs
  S residual = 0;  // |lhs - rhs|
  long long samples_per_state = 0;  // return-time trajectories per basis state
  bool within(S k = S(3)) const { return residual <= k * sigma + S(1e-8); }
};

// Checks Tr(N_ij rho) = d_i[(Z_ii - Z_ij) rho] where d_i is the rate-scaled
// return functional at vertex i.  Classical rate models use exact linear
// systems on both sides (sigma = 0); block models take the left side from the
// large-rate ladder and estimate d_i by sampled return times on a density
// basis, one trace functional entry per basis state.  Graph-induced
// generators are refused: their vertex populations are not autonomous, so
// neither side of the identity is defined for them.
template <class S>
MhtfCtCheck<S> mhtf_ct_verify(const GeneratorModel<S>& g, const Mat<S>& rho, int i, int j,
                              long long mc_budget = 100000,
                              std::uint64_t master_seed = 2026) {
  if (g.kind() == GeneratorKind::graph_induced)
    throw std::invalid_argument(
        "mhtf_ct_verify: the identity needs a classical rate model or a block walk");
  MhtfCtCheck<S> out;
  const auto fund = ct_fundamental_matrix<S>(g, S(1e-12));

  if (g.vertex_diagonal()) {
    const Eigen::Index ci = g.vertex_coord(i), cj = g.vertex_coord(j);
    const S zii = std::real(fund.zmat(ci, ci));
    const S zij = std::real(fund.zmat(ci, cj));
    const RVec<S> pi = vertex_stationary<S>(g);
    out.lhs = (i == j) ? S(0) : vertex_hitting_times<S>(g, i)[j];
    out.rhs = (zii - zij) / pi[i];
    out.residual = std::abs(out.lhs - out.rhs);
    return out;
  }

  const auto& sp = g.space();
  const int n = sp.dim();
  out.lhs = (i == j) ? S(0) : mean_hitting_ct<S>(g, i, j, rho).limit;

  const auto basis = density_basis<S>(n);
  const auto nb = Eigen::Index(basis.size());
  const long long per = mc_budget / nb;
  if (per < 100) throw std::runtime_error("mhtf_ct_verify: oracle budget exhausted");
  out.samples_per_state = per;

  // Entries of the rate-scaled return functional at vertex i: exit rate times
  // the sampled mean return time, one per basis state.
  RVec<S> rvals(nb), rerrs(nb);
  for (Eigen::Index b = 0; b < nb; ++b) {
    const auto hit = mc_ct_hitting<S>(g, i, i, basis[size_t(b)], per, 100000, master_seed,
                                      std::uint64_t(b) * std::uint64_t(per));
    if (hit.censored_fraction > 0)
      throw std::runtime_error("mhtf_ct_verify: return sampling censored at the horizon");
    const S q = rates<S>(g, i, basis[size_t(b)]).exit_rate;
    rvals[b] = q * S(hit.mean_time.mean);
    rerrs[b] = q * S(hit.mean_time.std_error);
  }

  // Functional applied to the difference of fundamental blocks at rho.
  const Mat<S> zii = sp.block_of(fund.zmat, i, i);
  const Mat<S> zij = sp.block_of(fund.zmat, i, j);
  const Vec<S> y = (zii - zij) * vec<S>(rho);
  Mat<S> bmat(sp.block_size(), nb);
  for (Eigen::Index b = 0; b < nb; ++b) bmat.col(b) = vec<S>(basis[size_t(b)]);
  const Vec<S> wcoef = bmat.fullPivLu().solve(y);
  S rhs = 0, var = 0;
  for (Eigen::Index b = 0; b < nb; ++b) {
    const S wb = std::real(wcoef[b]);
    rhs += wb * rvals[b];
    var += wb * wb * rerrs[b] * rerrs[b];
  }
  out.rhs = rhs;
  out.sigma = std::sqrt(var);
  out.residual = std::abs(out.lhs - out.rhs);
  return out;
}

}  // namespace oqwalk

#endif
