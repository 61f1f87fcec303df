#pragma once
//
// Sampling and storage of the driving randomness: finitely many Wiener
// channels and Poisson random measures per noise family, with counter-based
// keying so the observed family (k=1) can be held bit-identically fixed
// while the latent family (k=2) is resampled.
//
// Wiener paths use a canonical-lattice construction: one root increment per
// base-grid step, refined inside a step by Levy midpoint bisection on a
// depth-32 dyadic sub-lattice. Every lattice value is a pure function of
// (seed, family, channel, lattice node), so W(t) at a shared time is
// identical across replicas no matter which other times are queried. Jump
// event times are snapped to the same sub-lattice (snap error ~2^-32 of one
// step), which keeps the augmented simulation grid and the Wiener values
// exactly consistent.
//

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "sidemc/common.hpp"
#include "sidemc/rng.hpp"
#include "sidemc/time_grid.hpp"

namespace sidemc {

// ---------------------------------------------------------------------------
// Jump measure specification
// ---------------------------------------------------------------------------

/// One atom of a purely atomic jump intensity: mass `rate` at mark `z`,
/// belonging to partition set `tag`.
struct JumpAtom {
  double z = 0.0;
  double rate = 0.0;
  SetTag tag = SetTag::D;
};

/// One segment of a density-mode intensity: rate(z) dz on [z_lo, z_hi],
/// the whole segment carrying one partition tag. The rate may blow up
/// towards z = 0; only the part with |z| >= cutoff is ever sampled.
struct DensitySegment {
  double z_lo = 0.0;
  double z_hi = 0.0;
  SetTag tag = SetTag::D;
  std::function<double(double)> rate;
};

/// Intensity measure pi(dz) of one Poisson random measure together with the
/// partition of the mark space into D (compensated), E (raw Poisson) and,
/// for the observed family only, the finite-mass large-jump set V.
struct JumpMeasureSpec {
  enum class Mode { finite_atoms, density };

  Mode mode = Mode::finite_atoms;
  std::vector<JumpAtom> atoms;
  std::vector<DensitySegment> segments;
  /// Small-jump cutoff for infinite-mass densities: marks with |z| < cutoff
  /// are never sampled (their compensators still enter through drift terms).
  double small_jump_cutoff = 0.0;
  /// Panels per segment for composite quadrature / mark-CDF tabulation.
  int quadrature_panels = 64;

  bool empty() const {
    return (mode == Mode::finite_atoms) ? atoms.empty() : segments.empty();
  }
};

namespace detail {

/// Clip [lo, hi] to the part of a segment above the cutoff. Segments are
/// assumed not to straddle zero (split negative and positive parts).
inline bool restricted_range(const DensitySegment& seg, double cutoff,
                             double& lo, double& hi) {
  lo = seg.z_lo;
  hi = seg.z_hi;
  if (hi <= 0.0) {
    hi = std::min(hi, -cutoff);
  } else if (lo >= 0.0) {
    lo = std::max(lo, cutoff);
  } else {
    throw ConfigurationError(
        "JumpMeasureSpec: density segment must not straddle z=0; "
        "split it at the origin");
  }
  return lo < hi;
}

/// Composite Simpson rule with `panels` panels (panels made even).
template <class F>
double simpson(const F& f, double lo, double hi, int panels) {
  if (panels < 2) panels = 2;
  if (panels % 2 != 0) ++panels;
  const double h = (hi - lo) / panels;
  double acc = f(lo) + f(hi);
  for (int i = 1; i < panels; ++i) {
    acc += f(lo + i * h) * ((i % 2 != 0) ? 4.0 : 2.0);
  }
  return acc * h / 3.0;
}

}  // namespace detail

/// Integral of `integrand` against the intensity measure restricted to one
/// partition set (and to marks above the cutoff in density mode).
/// Atomic mode is an exact weighted sum. Density mode is composite Simpson
/// with a refinement-based error estimate; `error_out`, if non-null,
/// receives |I_n - I_2n|.
inline double compensator_quadrature(
    const std::function<double(double)>& integrand,
    const JumpMeasureSpec& spec, SetTag tag, double* error_out = nullptr) {
  if (error_out != nullptr) *error_out = 0.0;
  if (spec.mode == JumpMeasureSpec::Mode::finite_atoms) {
    double acc = 0.0;
    for (const JumpAtom& a : spec.atoms) {
      if (a.tag == tag) acc += a.rate * integrand(a.z);
    }
    return acc;
  }
  double coarse = 0.0, fine = 0.0;
  for (const DensitySegment& seg : spec.segments) {
    if (seg.tag != tag) continue;
    double lo = 0.0, hi = 0.0;
    if (!detail::restricted_range(seg, spec.small_jump_cutoff, lo, hi)) continue;
    const auto f = [&](double z) { return integrand(z) * seg.rate(z); };
    coarse += detail::simpson(f, lo, hi, spec.quadrature_panels);
    fine += detail::simpson(f, lo, hi, 2 * spec.quadrature_panels);
  }
  const double err = std::abs(fine - coarse);
  if (error_out != nullptr) *error_out = err;
  const double tol = 1e-6 * (1.0 + std::abs(fine));
  if (!(err <= tol)) {
    throw NumericalError(
        "compensator_quadrature: error estimate " + std::to_string(err) +
        " above tolerance; refine quadrature_panels or the segment split");
  }
  return fine;
}

/// Total restricted mass Lambda = pi({marks above cutoff} for one tag or all).
inline double restricted_mass(const JumpMeasureSpec& spec, SetTag tag) {
  return compensator_quadrature([](double) { return 1.0; }, spec, tag);
}

inline double restricted_mass(const JumpMeasureSpec& spec) {
  double m = 0.0;
  for (SetTag tag : {SetTag::D, SetTag::E, SetTag::V}) {
    m += restricted_mass(spec, tag);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Wiener paths
// ---------------------------------------------------------------------------

/// Materialized Gaussian increments of ϱ_max channels over the steps of one
/// grid. increments[i*channels + c] is the channel-c increment over step i.
struct WienerPath {
  Family family = Family::observed;
  int channels = 0;
  std::uint64_t seed = 0;
  int n_steps = 0;
  std::vector<double> increments;

  double increment(int step, int channel) const {
    return increments[static_cast<std::size_t>(step) * channels + channel];
  }
};

/// Root increment of one base-grid step (the canonical lattice value the
/// whole construction is anchored to).
inline double wiener_root_increment(std::uint64_t seed, Family family,
                                    int channel, int step, double dt) {
  return std::sqrt(dt) *
         rng::normal({seed, rng::wiener_step,
                      static_cast<std::uint64_t>(family_index(family)),
                      static_cast<std::uint64_t>(channel),
                      static_cast<std::uint64_t>(step)});
}

/// One Gaussian increment per (step, channel) of the given grid.
/// Deterministic in (grid, family, channels, seed).
inline WienerPath sample_wiener_path(const TimeGrid& grid, Family family,
                                     int channels, std::uint64_t seed) {
  grid.validate();
  if (channels < 1) {
    throw ConfigurationError("sample_wiener_path: channels must be >= 1");
  }
  WienerPath path;
  path.family = family;
  path.channels = channels;
  path.seed = seed;
  path.n_steps = grid.n_steps;
  path.increments.resize(static_cast<std::size_t>(grid.n_steps) * channels);
  for (int i = 0; i < grid.n_steps; ++i) {
    const double dt = grid.nodes[static_cast<std::size_t>(i) + 1] -
                      grid.nodes[static_cast<std::size_t>(i)];
    for (int c = 0; c < channels; ++c) {
      path.increments[static_cast<std::size_t>(i) * channels + c] =
          wiener_root_increment(seed, family, c, i, dt);
    }
  }
  return path;
}

/// Point-evaluable Wiener path anchored to a base grid: values at base
/// nodes come from prefix sums of root increments; values inside a step
/// come from Levy midpoint bisection on a depth-32 dyadic sub-lattice.
class WienerLattice {
 public:
  static constexpr int kDepth = 32;
  static constexpr std::uint64_t kScale = 1ULL << kDepth;

  WienerLattice(const TimeGrid& base, Family family, int channels,
                std::uint64_t seed)
      : base_(&base), family_(family), channels_(channels), seed_(seed) {
    prefix_.assign(static_cast<std::size_t>(channels) *
                       (static_cast<std::size_t>(base.n_steps) + 1),
                   0.0);
    for (int c = 0; c < channels; ++c) {
      double acc = 0.0;
      const std::size_t off =
          static_cast<std::size_t>(c) * (static_cast<std::size_t>(base.n_steps) + 1);
      for (int i = 0; i < base.n_steps; ++i) {
        const double dt = base.nodes[static_cast<std::size_t>(i) + 1] -
                          base.nodes[static_cast<std::size_t>(i)];
        acc += wiener_root_increment(seed, family, c, i, dt);
        prefix_[off + static_cast<std::size_t>(i) + 1] = acc;
      }
    }
  }

  int channels() const { return channels_; }

  /// Snap a time to the canonical lattice: (step, dyadic offset k/2^32).
  void locate(double t, int& step, std::uint64_t& k) const {
    step = base_->step_of(t);
    const double lo = base_->nodes[static_cast<std::size_t>(step)];
    const double dt = base_->nodes[static_cast<std::size_t>(step) + 1] - lo;
    double r = (t - lo) / dt;
    if (r < 0.0) r = 0.0;
    if (r > 1.0) r = 1.0;
    k = static_cast<std::uint64_t>(std::llround(r * static_cast<double>(kScale)));
    if (k >= kScale) {
      ++step;
      k = 0;
    }
  }

  /// Lattice time corresponding to (step, k).
  double lattice_time(int step, std::uint64_t k) const {
    const double lo = base_->nodes[static_cast<std::size_t>(step)];
    const double dt = base_->nodes[static_cast<std::size_t>(step) + 1] - lo;
    return lo + dt * (static_cast<double>(k) / static_cast<double>(kScale));
  }

  /// W(channel, t) with t snapped to the canonical lattice.
  double value(int channel, double t) const {
    int step;
    std::uint64_t k;
    locate(t, step, k);
    return value_at(channel, step, k);
  }

  /// W at the lattice point (step, k/2^32 within the step).
  double value_at(int channel, int step, std::uint64_t k) const {
    const std::size_t off = static_cast<std::size_t>(channel) *
                            (static_cast<std::size_t>(base_->n_steps) + 1);
    if (k == 0) return prefix_[off + static_cast<std::size_t>(step)];
    const double lo = base_->nodes[static_cast<std::size_t>(step)];
    const double dt = base_->nodes[static_cast<std::size_t>(step) + 1] - lo;
    double wa = prefix_[off + static_cast<std::size_t>(step)];
    double wb = prefix_[off + static_cast<std::size_t>(step) + 1];
    std::uint64_t a = 0, b = kScale;
    while (b - a > 1) {
      const std::uint64_t m = a + (b - a) / 2;
      // Midpoints are in bijection with their offset m, so m keys the node.
      const double half_len = dt * static_cast<double>(b - a) /
                              (2.0 * static_cast<double>(kScale));
      const double wm =
          0.5 * (wa + wb) +
          std::sqrt(0.5 * half_len) *
              rng::normal({seed_, rng::wiener_bridge,
                           static_cast<std::uint64_t>(family_index(family_)),
                           static_cast<std::uint64_t>(channel),
                           static_cast<std::uint64_t>(step), m});
      if (k == m) return wm;
      if (k < m) {
        b = m;
        wb = wm;
      } else {
        a = m;
        wa = wm;
      }
    }
    return wa;  // unreachable for k in (0, kScale)
  }

 private:
  const TimeGrid* base_;
  Family family_;
  int channels_;
  std::uint64_t seed_;
  std::vector<double> prefix_;  // per channel, W at base nodes
};

// ---------------------------------------------------------------------------
// Jump events
// ---------------------------------------------------------------------------

/// One sampled jump: time (snapped to the canonical lattice of the grid it
/// was sampled on), mark, and partition tag.
struct JumpEvent {
  double time = 0.0;
  double z = 0.0;
  SetTag tag = SetTag::D;
};

/// All events of one family over the horizon, sorted by time.
struct JumpEventList {
  Family family = Family::observed;
  std::uint64_t seed = 0;
  std::vector<JumpEvent> events;
};

namespace detail {

/// Draw one mark from the normalized restricted measure, by exact discrete
/// inversion (atoms) or inverse-CDF on a tabulated grid (density).
struct MarkSampler {
  const JumpMeasureSpec* spec;
  double total = 0.0;
  // density mode tabulation: per segment, cumulative mass before it and a
  // CDF table on an equispaced sub-grid.
  struct SegTable {
    double lo = 0.0, hi = 0.0, mass = 0.0;
    SetTag tag = SetTag::D;
    std::vector<double> cdf;  // size panels+1, from 0 to mass
  };
  std::vector<SegTable> tables;

  explicit MarkSampler(const JumpMeasureSpec& s) : spec(&s) {
    if (s.mode == JumpMeasureSpec::Mode::finite_atoms) {
      for (const JumpAtom& a : s.atoms) {
        if (a.rate < 0.0) {
          throw ConfigurationError("JumpMeasureSpec: negative atom rate");
        }
        total += a.rate;
      }
      return;
    }
    for (const DensitySegment& seg : s.segments) {
      double lo = 0.0, hi = 0.0;
      if (!restricted_range(seg, s.small_jump_cutoff, lo, hi)) continue;
      SegTable tab;
      tab.lo = lo;
      tab.hi = hi;
      tab.tag = seg.tag;
      const int n = std::max(256, 4 * s.quadrature_panels);
      tab.cdf.resize(static_cast<std::size_t>(n) + 1, 0.0);
      const double h = (hi - lo) / n;
      double acc = 0.0;
      double prev = seg.rate(lo);
      for (int i = 1; i <= n; ++i) {
        const double cur = seg.rate(lo + i * h);
        if (!(prev >= 0.0) || !(cur >= 0.0)) {
          throw ConfigurationError("JumpMeasureSpec: negative density rate");
        }
        acc += 0.5 * (prev + cur) * h;
        tab.cdf[static_cast<std::size_t>(i)] = acc;
        prev = cur;
      }
      tab.mass = acc;
      total += acc;
      tables.push_back(std::move(tab));
    }
    if (!std::isfinite(total)) {
      throw ConfigurationError(
          "JumpMeasureSpec: restricted mass is not finite; raise the "
          "small-jump cutoff");
    }
  }

  JumpEvent draw(double u) const {
    JumpEvent e;
    double target = u * total;
    if (spec->mode == JumpMeasureSpec::Mode::finite_atoms) {
      for (const JumpAtom& a : spec->atoms) {
        if (target <= a.rate || &a == &spec->atoms.back()) {
          e.z = a.z;
          e.tag = a.tag;
          return e;
        }
        target -= a.rate;
      }
    }
    for (const SegTable& tab : tables) {
      if (target <= tab.mass || &tab == &tables.back()) {
        // invert the tabulated CDF by binary search + linear interpolation
        const auto it =
            std::lower_bound(tab.cdf.begin(), tab.cdf.end(), target);
        std::size_t i = static_cast<std::size_t>(it - tab.cdf.begin());
        if (i == 0) i = 1;
        if (i >= tab.cdf.size()) i = tab.cdf.size() - 1;
        const double c0 = tab.cdf[i - 1], c1 = tab.cdf[i];
        const double frac = (c1 > c0) ? (target - c0) / (c1 - c0) : 0.0;
        const double h = (tab.hi - tab.lo) /
                         static_cast<double>(tab.cdf.size() - 1);
        e.z = tab.lo + h * (static_cast<double>(i - 1) + frac);
        e.tag = tab.tag;
        return e;
      }
      target -= tab.mass;
    }
    throw ConfigurationError("MarkSampler: empty restricted measure");
  }
};

}  // namespace detail

/// Sample all events of one family over the grid horizon: event count
/// Poisson(Lambda*T), times i.i.d. uniform (order-statistics method) snapped
/// to the canonical lattice, marks i.i.d. from the normalized restricted
/// measure. Deterministic in (spec, grid, family, seed).
inline JumpEventList sample_jump_events(const JumpMeasureSpec& spec,
                                        const TimeGrid& grid, Family family,
                                        std::uint64_t seed) {
  grid.validate();
  if (family == Family::latent) {
    const auto has_v = [&](SetTag t) {
      if (spec.mode == JumpMeasureSpec::Mode::finite_atoms) {
        for (const JumpAtom& a : spec.atoms)
          if (a.tag == t) return true;
      } else {
        for (const DensitySegment& s : spec.segments)
          if (s.tag == t) return true;
      }
      return false;
    };
    if (has_v(SetTag::V)) {
      throw ConfigurationError(
          "sample_jump_events: V-tagged marks are only defined for the "
          "observed family (the latent partition is D and E only)");
    }
  }

  JumpEventList list;
  list.family = family;
  list.seed = seed;
  if (spec.empty()) return list;

  const detail::MarkSampler sampler(spec);
  if (sampler.total == 0.0) return list;
  const std::uint64_t fam = static_cast<std::uint64_t>(family_index(family));
  const std::uint64_t n =
      rng::poisson(sampler.total * grid.T, {seed, rng::event_count, fam});

  // Helper lattice (channel count irrelevant) for time snapping.
  list.events.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    JumpEvent e =
        sampler.draw(rng::uniform({seed, rng::event_mark, fam, i}));
    const double t_raw =
        grid.T * rng::uniform({seed, rng::event_time, fam, i});
    // snap to the canonical dyadic sub-lattice of the containing step
    const int step = grid.step_of(t_raw);
    const double lo = grid.nodes[static_cast<std::size_t>(step)];
    const double dt = grid.nodes[static_cast<std::size_t>(step) + 1] - lo;
    double r = (t_raw - lo) / dt;
    if (r < 0.0) r = 0.0;
    if (r > 1.0) r = 1.0;
    std::uint64_t k = static_cast<std::uint64_t>(
        std::llround(r * static_cast<double>(WienerLattice::kScale)));
    if (k == 0) k = 1;  // keep events strictly inside a step
    if (k >= WienerLattice::kScale) k = WienerLattice::kScale - 1;
    e.time = lo + dt * (static_cast<double>(k) /
                        static_cast<double>(WienerLattice::kScale));
    list.events.push_back(e);
  }
  std::sort(list.events.begin(), list.events.end(),
            [](const JumpEvent& a, const JumpEvent& b) {
              return a.time < b.time;
            });
  return list;
}

// ---------------------------------------------------------------------------
// Combined noise realization and the per-path simulation grid
// ---------------------------------------------------------------------------

/// One full driving environment: seeds, event lists and lazily evaluable
/// Wiener paths for both families, anchored to one shared base grid.
struct NoiseRealization {
  TimeGrid base_grid;
  int channels = 1;
  std::uint64_t seed_observed = 0;
  std::uint64_t seed_latent = 0;
  JumpEventList events_observed;
  JumpEventList events_latent;
};

/// Build a NoiseRealization by sampling both event lists.
inline NoiseRealization sample_noise(const TimeGrid& grid, int channels,
                                     const JumpMeasureSpec& measure_observed,
                                     const JumpMeasureSpec& measure_latent,
                                     std::uint64_t seed_observed,
                                     std::uint64_t seed_latent) {
  NoiseRealization noise;
  noise.base_grid = grid;
  noise.channels = channels;
  noise.seed_observed = seed_observed;
  noise.seed_latent = seed_latent;
  noise.events_observed =
      sample_jump_events(measure_observed, grid, Family::observed, seed_observed);
  noise.events_latent =
      sample_jump_events(measure_latent, grid, Family::latent, seed_latent);
  return noise;
}

/// A jump occurring at augmented-grid node `node` (the state completes its
/// continuous step to that node first, then the jump applies).
struct PathEvent {
  std::size_t node = 0;
  Family family = Family::observed;
  double z = 0.0;
  SetTag tag = SetTag::D;
};

/// The augmented simulation grid of one path: base nodes up to t_end plus
/// all event times, with per-step Wiener increments of both families and
/// the events attached to their nodes. Shared read-only by all trajectories
/// simulated under the same noise.
struct PathNoise {
  std::vector<double> nodes;      // ascending, nodes.front()=0, back()=t_end
  int channels = 1;
  std::vector<double> dW_obs;     // (nodes.size()-1) x channels, row-major
  std::vector<double> dW_lat;
  std::vector<PathEvent> events;  // sorted by node index
  double t_end = 0.0;

  double increment(Family f, std::size_t step, int channel) const {
    const std::vector<double>& v = (f == Family::observed) ? dW_obs : dW_lat;
    return v[step * static_cast<std::size_t>(channels) + channel];
  }
  std::size_t n_increment_steps() const { return nodes.size() - 1; }
};

/// Assemble the augmented grid and materialize the Wiener increments of both
/// families over it. `event_filter`, if supplied, decides which events enter
/// the path (used by the large-jump interlacer to run truncated segments).
inline PathNoise build_path_noise(
    const NoiseRealization& noise, const WienerLattice& lat_obs,
    const WienerLattice& lat_lat, double t_begin, double t_end,
    const std::function<bool(const JumpEvent&, Family)>& event_filter = {}) {
  if (!(t_end > t_begin) || t_end > noise.base_grid.T + 1e-12) {
    throw ConfigurationError("build_path_noise: need t_begin < t_end <= T");
  }
  PathNoise path;
  path.channels = noise.channels;
  path.t_end = t_end;

  // Collect node times: base nodes in (t_begin, t_end) plus event times.
  struct TimedEvent {
    double time;
    Family family;
    double z;
    SetTag tag;
  };
  std::vector<TimedEvent> evts;
  const auto collect = [&](const JumpEventList& list, Family f) {
    for (const JumpEvent& e : list.events) {
      if (e.time <= t_begin || e.time > t_end) continue;
      if (event_filter && !event_filter(e, f)) continue;
      evts.push_back({e.time, f, e.z, e.tag});
    }
  };
  collect(noise.events_observed, Family::observed);
  collect(noise.events_latent, Family::latent);

  path.nodes.push_back(t_begin);
  for (const double t : noise.base_grid.nodes) {
    if (t > t_begin && t < t_end) path.nodes.push_back(t);
  }
  for (const TimedEvent& e : evts) path.nodes.push_back(e.time);
  path.nodes.push_back(t_end);
  std::sort(path.nodes.begin(), path.nodes.end());
  path.nodes.erase(std::unique(path.nodes.begin(), path.nodes.end()),
                   path.nodes.end());

  // Attach events to their nodes (several events may share a node; they are
  // applied in time order, which coincides with list order after sorting).
  std::sort(evts.begin(), evts.end(),
            [](const TimedEvent& a, const TimedEvent& b) {
              return a.time < b.time;
            });
  for (const TimedEvent& e : evts) {
    const auto it =
        std::lower_bound(path.nodes.begin(), path.nodes.end(), e.time);
    path.events.push_back(
        {static_cast<std::size_t>(it - path.nodes.begin()), e.family, e.z,
         e.tag});
  }

  // Wiener increments over the augmented steps, evaluated on the canonical
  // lattice so values are independent of the augmentation.
  const std::size_t n = path.nodes.size() - 1;
  path.dW_obs.resize(n * static_cast<std::size_t>(noise.channels));
  path.dW_lat.resize(n * static_cast<std::size_t>(noise.channels));
  for (int c = 0; c < noise.channels; ++c) {
    double w_obs_prev = lat_obs.value(c, path.nodes[0]);
    double w_lat_prev = lat_lat.value(c, path.nodes[0]);
    for (std::size_t i = 0; i < n; ++i) {
      const double w_obs = lat_obs.value(c, path.nodes[i + 1]);
      const double w_lat = lat_lat.value(c, path.nodes[i + 1]);
      path.dW_obs[i * static_cast<std::size_t>(noise.channels) + c] =
          w_obs - w_obs_prev;
      path.dW_lat[i * static_cast<std::size_t>(noise.channels) + c] =
          w_lat - w_lat_prev;
      w_obs_prev = w_obs;
      w_lat_prev = w_lat;
    }
  }
  return path;
}

/// Convenience overload constructing the Wiener lattices in place.
inline PathNoise build_path_noise(
    const NoiseRealization& noise, double t_begin, double t_end,
    const std::function<bool(const JumpEvent&, Family)>& event_filter = {}) {
  const WienerLattice lat_obs(noise.base_grid, Family::observed,
                              noise.channels, noise.seed_observed);
  const WienerLattice lat_lat(noise.base_grid, Family::latent, noise.channels,
                              noise.seed_latent);
  return build_path_noise(noise, lat_obs, lat_lat, t_begin, t_end,
                          event_filter);
}

}  // namespace sidemc
