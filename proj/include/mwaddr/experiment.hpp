#pragma once

#include <algorithm>
#include <optional>
#include <ostream>
#include <thread>
#include <vector>

#include "analysis.hpp"
#include "imaging.hpp"
#include "simulation.hpp"

// Imaging and pair analysis of a simulated ensemble.
namespace mwaddr {

struct ImagedEnsemble {
  ImageGeometry geometry;
  std::vector<std::vector<PositionEstimate>> positions;  // per shot, image coordinates (m)
  std::vector<double> mean_image;                        // row-major, per-shot average
  std::vector<double> mean_profile;
  std::vector<long> failed_shots;                        // shots whose fit did not converge
};

/// Renders and localises every shot. Shot k uses the imaging stream (seed, k); image sums
/// are accumulated in shot order, so the output does not depend on `workers`.
inline ImagedEnsemble image_ensemble(const EnsembleResult& result, const ShotConfig& config,
                                     const ApparatusConfig& cfg, const ImagingConfig& imaging,
                                     unsigned workers = 1) {
  imaging.validate();
  ImagedEnsemble out;
  const double a = cfg.site_spacing();
  out.geometry = ImageGeometry::for_lattice(config.lattice_extent, result.reference_site, a, imaging);
  const auto n_shots = static_cast<long>(result.shots.size());
  out.positions.resize(result.shots.size());
  const std::size_t npix = static_cast<std::size_t>(out.geometry.width * out.geometry.height);
  out.mean_image.assign(npix, 0.0);
  out.mean_profile.assign(static_cast<std::size_t>(out.geometry.width), 0.0);
  std::vector<char> failed(result.shots.size(), 0);

  const unsigned n_workers = std::max(1u, workers);
  const long block = static_cast<long>(n_workers) * 8;
  std::vector<std::vector<double>> images(static_cast<std::size_t>(block));
  for (long start = 0; start < n_shots; start += block) {
    const long stop = std::min(n_shots, start + block);
    auto work = [&](unsigned w) {
      for (long k = start + w; k < stop; k += n_workers) {
        const ShotRecord& shot = result.shots[static_cast<std::size_t>(k)];
        Rng rng = stream_rng(config.seed, static_cast<std::uint64_t>(shot.index), Stream::imaging);
        const auto emitters = emitters_for_shot(shot, result.reference_site, a);
        SyntheticImage img = render_image(emitters, out.geometry, imaging, rng);
        try {
          out.positions[static_cast<std::size_t>(k)] = estimate_positions_counted(img, imaging).atoms;
        } catch (const NumericalError&) {
          failed[static_cast<std::size_t>(k)] = 1;
        }
        images[static_cast<std::size_t>(k - start)] = std::move(img.pixels);
      }
    };
    if (n_workers == 1) {
      work(0);
    } else {
      std::vector<std::thread> pool;
      for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(work, w);
      for (auto& t : pool) t.join();
    }
    for (long k = start; k < stop; ++k) {
      const auto& px = images[static_cast<std::size_t>(k - start)];
      for (std::size_t i = 0; i < npix; ++i) out.mean_image[i] += px[i];
    }
  }
  for (double& v : out.mean_image) v /= static_cast<double>(n_shots);
  for (long r = 0; r < out.geometry.height; ++r) {
    for (long c = 0; c < out.geometry.width; ++c) {
      out.mean_profile[static_cast<std::size_t>(c)] +=
          out.mean_image[static_cast<std::size_t>(r * out.geometry.width + c)];
    }
  }
  for (long k = 0; k < n_shots; ++k) {
    if (failed[static_cast<std::size_t>(k)]) out.failed_shots.push_back(k);
  }
  return out;
}

struct PairAnalysisOptions {
  int max_gap = 4;              // sites; targets closer than this form one group
  double window_sites = 4.0;    // half-width around a group centre used for pairing
  double bin_width_sites = 1.0;
  int correct_window = 3;       // sites around a group that must hold no extra survivor
};

struct PairAnalysis {
  std::vector<std::vector<int>> groups;  // absolute target sites
  Histogram histogram;
  std::optional<SelectivityEstimate> selectivity;
  long correct_groups = 0;               // from the simulated ground truth
};

inline PairAnalysis analyze_pairs(const EnsembleResult& result, const ImagedEnsemble& imaged,
                                  const ApparatusConfig& cfg, const PairAnalysisOptions& opts = {}) {
  PairAnalysis out;
  const double a = cfg.site_spacing();
  out.groups = target_groups(result, opts.max_gap);
  std::vector<double> centers;
  for (const auto& g : out.groups) {
    if (g.size() != 2) continue;
    centers.push_back((0.5 * (g.front() + g.back()) - static_cast<double>(result.reference_site)) * a);
  }
  std::vector<std::vector<double>> xs;
  for (const auto& shot : imaged.positions) {
    std::vector<double> v;
    for (const auto& p : shot) v.push_back(p.position);
    xs.push_back(std::move(v));
  }
  out.histogram = pair_distance_histogram(xs, centers, opts.window_sites * a, opts.bin_width_sites, a);
  if (out.histogram.total() > 0) {
    try {
      out.selectivity = selectivity_from_histogram(out.histogram);
    } catch (const NumericalError&) {
      out.selectivity.reset();
    }
  }
  out.correct_groups = count_correct_groups(result, out.groups, opts.correct_window);
  return out;
}

/// `shot_index,position_um,position_sites,uncertainty_um,amplitude`; positions relative to the reference site.
inline void write_positions_csv(std::ostream& os, const ImagedEnsemble& im, const EnsembleResult& r,
                                double site_spacing) {
  os << "shot_index,position_um,position_sites,uncertainty_um,amplitude\n";
  char line[160];
  for (std::size_t k = 0; k < im.positions.size(); ++k) {
    for (const auto& p : im.positions[k]) {
      std::snprintf(line, sizeof line, "%ld,%.15g,%.15g,%.15g,%.15g\n", r.shots[k].index,
                    p.position / units::um, p.position / site_spacing, p.uncertainty / units::um,
                    p.amplitude);
      os << line;
    }
  }
}

}  // namespace mwaddr
