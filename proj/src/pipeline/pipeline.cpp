#include "cephlm/pipeline/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>

#include "cephlm/error.hpp"
#include "cephlm/parallel.hpp"
#include "cephlm/patchset/image.hpp"
#include "cephlm/patchset/patches.hpp"
#include "cephlm/rng.hpp"

namespace cephlm::pipeline {

using nlohmann::json;
using patchset::kPatchPixels;
using patchset::Tissue;

Aggregation parse_aggregation(std::string_view s) {
  if (s == "mean") return Aggregation::mean;
  if (s == "median") return Aggregation::median;
  throw Error(Errc::config_error, "aggregation must be mean or median, got '" + std::string(s) + "'");
}

std::string_view aggregation_name(Aggregation a) { return a == Aggregation::mean ? "mean" : "median"; }

void ScanConfig::validate() const {
  if (!(grid_stride_px >= 1.0)) throw Error(Errc::config_error, "grid_stride_px must be >= 1");
  if (!(pc_confidence_threshold > 0.0 && pc_confidence_threshold < 1.0)) {
    throw Error(Errc::config_error, "pc_confidence_threshold must be in (0, 1)");
  }
  if (!(outlier_k > 0.0)) throw Error(Errc::config_error, "outlier_k must be > 0");
  if (!(soft_filter_scales > 0.0)) throw Error(Errc::config_error, "soft_filter_scales must be > 0");
  if (batch_size < 1) throw Error(Errc::config_error, "scan batch_size must be >= 1");
  for (const auto& [w, h] : scale_set) {
    if (!(w >= 1.0) || !(h >= 1.0)) throw Error(Errc::config_error, "scale windows must be at least 1 px");
  }
}

std::vector<std::pair<double, double>> default_scale_set(const patchset::LandmarkCatalog& catalog) {
  std::vector<std::pair<double, double>> out;
  for (double s : {80.0, 128.0, 192.0, 256.0, 320.0}) out.emplace_back(s, s);
  for (const auto& spec : catalog.specs()) {
    for (const auto& [rw, rh] : spec.aspect_set) {
      const std::pair<double, double> win{192.0 * rw, 192.0 * rh};
      if (std::find(out.begin(), out.end(), win) == out.end()) out.push_back(win);
    }
  }
  return out;
}

std::vector<Point> generate_grid(std::size_t width, std::size_t height, double stride) {
  if (!(stride >= 1.0)) throw Error(Errc::invalid_argument, "grid stride must be >= 1");
  std::vector<Point> out;
  for (std::size_t i = 0; static_cast<double>(i) * stride < static_cast<double>(width); ++i) {
    for (std::size_t j = 0; static_cast<double>(j) * stride < static_cast<double>(height); ++j) {
      out.push_back({static_cast<double>(i) * stride, static_cast<double>(j) * stride});
    }
  }
  return out;
}

Rect window_at(Point p, double w, double h, std::size_t width, std::size_t height) {
  auto place = [](double c, double size, double extent) {
    double x0 = c - 0.5 * size;
    if (size <= extent - 1.0) x0 = std::clamp(x0, 0.0, extent - 1.0 - size);
    return x0;
  };
  return {place(p.x, w, static_cast<double>(width)), place(p.y, h, static_cast<double>(height)), w, h};
}

namespace {

// Runs `predict` over rects in fixed-size batches, possibly in parallel,
// returning per-rect outputs in input order.
template <typename Out, typename Predict>
std::vector<Out> batched_inference(const patchset::Cephalogram& ceph, const std::vector<Rect>& rects,
                                   std::size_t batch_size, std::size_t jobs, Predict&& predict) {
  std::vector<Out> out(rects.size());
  const std::size_t n_batches = (rects.size() + batch_size - 1) / batch_size;
  parallel_for(n_batches, jobs, [&](std::size_t b) {
    const std::size_t start = b * batch_size;
    const std::size_t end = std::min(rects.size(), start + batch_size);
    std::vector<float> buf((end - start) * kPatchPixels);
    for (std::size_t i = start; i < end; ++i) {
      patchset::extract_patch_normalized(ceph, rects[i], buf.data() + (i - start) * kPatchPixels);
    }
    auto res = predict(std::span<const float>(buf));
    for (std::size_t i = start; i < end; ++i) out[i] = std::move(res[i - start]);
  });
  return out;
}

}  // namespace

template <typename T>
std::map<std::string, CandidateSet> collect_candidates(const patchset::Cephalogram& ceph, const PcModel<T>& pc,
                                                       const ScanConfig& cfg,
                                                       const std::vector<std::pair<double, double>>& scales) {
  cfg.validate();
  if (pc.labels.size() != pc.model.arch().num_classes) {
    throw Error(Errc::model_mismatch, "PC label list does not match its head");
  }
  const auto grid = generate_grid(ceph.width(), ceph.height(), cfg.grid_stride_px);
  std::vector<Rect> rects;
  rects.reserve(grid.size() * scales.size());
  for (const auto& g : grid) {
    for (const auto& [w, h] : scales) rects.push_back(window_at(g, w, h, ceph.width(), ceph.height()));
  }
  const auto probs = batched_inference<std::vector<double>>(
      ceph, rects, cfg.batch_size, cfg.jobs, [&](std::span<const float> x) { return nets::predict_pc(pc.model, x); });

  std::map<std::string, CandidateSet> out;
  for (const auto& l : pc.labels) {
    if (l != patchset::kBackground) out[l].landmark = l;
  }
  for (std::size_t i = 0; i < rects.size(); ++i) {
    const auto& p = probs[i];
    const std::size_t best = static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
    const std::string& label = pc.labels[best];
    if (label == patchset::kBackground || p[best] < cfg.pc_confidence_threshold) continue;
    out[label].candidates.push_back({rects[i], p[best], i / scales.size(), i % scales.size()});
  }
  return out;
}

template <typename T>
std::vector<Point> estimate_scatter(const patchset::Cephalogram& ceph, const CandidateSet& candidates,
                                    const PeModel<T>& pe, const ScanConfig& cfg) {
  if (pe.landmark != candidates.landmark) {
    throw Error(Errc::model_mismatch, "PE model for '" + pe.landmark + "' applied to candidates of '" +
                                          candidates.landmark + "'");
  }
  if (candidates.candidates.empty()) return {};
  std::vector<Rect> rects;
  for (const auto& c : candidates.candidates) rects.push_back(c.rect);
  const auto uv = batched_inference<std::array<double, 2>>(
      ceph, rects, cfg.batch_size, cfg.jobs, [&](std::span<const float> x) { return nets::predict_pe(pe.model, x); });
  std::vector<Point> out;
  for (std::size_t i = 0; i < rects.size(); ++i) {
    const double u = std::clamp(uv[i][0], nets::kPeClampLo, nets::kPeClampHi);
    const double v = std::clamp(uv[i][1], nets::kPeClampLo, nets::kPeClampHi);
    out.push_back({rects[i].x0 + u * rects[i].w, rects[i].y0 + v * rects[i].h});
  }
  return out;
}

namespace {

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Point aggregate(std::span<const Point> points, Aggregation mode) {
  if (points.empty()) throw Error(Errc::empty_input, "cannot aggregate an empty point set");
  if (mode == Aggregation::mean) {
    double x = 0.0, y = 0.0;
    for (const auto& p : points) {
      x += p.x;
      y += p.y;
    }
    return {x / static_cast<double>(points.size()), y / static_cast<double>(points.size())};
  }
  std::vector<double> xs, ys;
  for (const auto& p : points) {
    xs.push_back(p.x);
    ys.push_back(p.y);
  }
  return {median_of(std::move(xs)), median_of(std::move(ys))};
}

OutlierSplit reject_outliers(std::span<const Point> points, double k, Aggregation mode) {
  if (points.empty()) throw Error(Errc::empty_input, "outlier rejection needs at least one point");
  OutlierSplit out;
  out.center = aggregate(points, mode);
  std::vector<double> d;
  double ss = 0.0;
  for (const auto& p : points) {
    d.push_back(patchset::distance(p, out.center));
    ss += d.back() * d.back();
  }
  out.sigma = std::sqrt(ss / static_cast<double>(points.size()));
  for (std::size_t i = 0; i < points.size(); ++i) {
    (d[i] > k * out.sigma ? out.removed : out.kept).push_back(points[i]);
  }
  return out;
}

Bimodality detect_bimodality(std::span<const Point> points, std::uint64_t seed) {
  Bimodality out;
  out.assignment.assign(points.size(), 0);
  if (points.size() < 4) return out;
  Rng rng(seed);
  const Point first = points[rng.index(points.size())];
  Point second = first;
  double far = -1.0;
  for (const auto& p : points) {
    const double d = patchset::distance(p, first);
    if (d > far) {
      far = d;
      second = p;
    }
  }
  out.centers[0] = first;
  out.centers[1] = second;
  std::size_t counts[2] = {0, 0};
  for (int iter = 0; iter < 20; ++iter) {
    double sx[2] = {0, 0}, sy[2] = {0, 0};
    counts[0] = counts[1] = 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t c =
          patchset::distance(points[i], out.centers[1]) < patchset::distance(points[i], out.centers[0]) ? 1 : 0;
      out.assignment[i] = c;
      sx[c] += points[i].x;
      sy[c] += points[i].y;
      ++counts[c];
    }
    for (int c = 0; c < 2; ++c) {
      if (counts[c]) out.centers[c] = {sx[c] / static_cast<double>(counts[c]), sy[c] / static_cast<double>(counts[c])};
    }
  }
  if (!counts[0] || !counts[1]) return out;
  double ss[2] = {0, 0};
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double d = patchset::distance(points[i], out.centers[out.assignment[i]]);
    ss[out.assignment[i]] += d * d;
  }
  const double spread = 0.5 * (std::sqrt(ss[0] / static_cast<double>(counts[0])) +
                               std::sqrt(ss[1] / static_cast<double>(counts[1])));
  out.flag = patchset::distance(out.centers[0], out.centers[1]) > 3.0 * spread;
  return out;
}

ReferenceOffsets build_reference_offsets(std::span<const patchset::AnnotationSet> training,
                                         const patchset::LandmarkCatalog& catalog) {
  ReferenceOffsets out;
  for (const auto& soft : catalog.specs()) {
    if (soft.tissue != Tissue::soft) continue;
    for (const auto& hard : catalog.specs()) {
      if (hard.tissue != Tissue::hard) continue;
      std::vector<Point> offsets;
      for (const auto& ann : training) {
        auto s = ann.points.find(soft.name), h = ann.points.find(hard.name);
        if (s == ann.points.end() || h == ann.points.end()) continue;
        offsets.push_back({s->second.position.x - h->second.position.x, s->second.position.y - h->second.position.y});
      }
      if (offsets.empty()) continue;
      OffsetStat st;
      st.count = offsets.size();
      st.median = aggregate(offsets, Aggregation::median);
      std::vector<double> dev;
      for (const auto& o : offsets) dev.push_back(patchset::distance(o, st.median));
      st.scale = std::max(1.0, 1.4826 * median_of(std::move(dev)));
      out.table[soft.name][hard.name] = st;
    }
  }
  return out;
}

std::optional<double> offset_deviation(Point p, const std::map<std::string, OffsetStat>& stats,
                                       const std::map<std::string, Point>& anchors, double spread) {
  std::vector<double> z;
  for (const auto& [name, st] : stats) {
    auto a = anchors.find(name);
    if (a == anchors.end()) continue;
    const Point off{p.x - a->second.x, p.y - a->second.y};
    z.push_back(patchset::distance(off, st.median) / std::hypot(st.scale, spread));
  }
  if (z.empty()) return std::nullopt;
  return median_of(std::move(z));
}

const LandmarkEstimate* IdentifyResult::find(std::string_view name) const {
  for (const auto& e : estimates) {
    if (e.landmark == name) return &e;
  }
  return nullptr;
}

namespace {

// Outlier rejection, optional cluster selection and aggregation of one scatter.
Point axis_std(std::span<const Point> pts) {
  const Point mean = aggregate(pts, Aggregation::mean);
  double vx = 0.0, vy = 0.0;
  for (const auto& q : pts) {
    vx += (q.x - mean.x) * (q.x - mean.x);
    vy += (q.y - mean.y) * (q.y - mean.y);
  }
  const double n = static_cast<double>(pts.size());
  return {std::sqrt(vx / n), std::sqrt(vy / n)};
}

// Points the aggregate is taken over: the optional larger cluster, then the
// outlier pass.
struct Support {
  std::vector<Point> kept;
  std::size_t n_removed = 0;
  bool bimodal = false;
};

Support support_of(std::vector<Point> scatter, const std::string& landmark, const ScanConfig& cfg) {
  Support out;
  const std::size_t n_in = scatter.size();
  const auto bi = detect_bimodality(scatter, hash_string(landmark));
  out.bimodal = bi.flag;
  if (bi.flag && cfg.select_larger_cluster) {
    const std::size_t n1 = static_cast<std::size_t>(std::count(bi.assignment.begin(), bi.assignment.end(), 1));
    const std::size_t keep = n1 > scatter.size() - n1 ? 1 : 0;
    std::vector<Point> sub;
    for (std::size_t i = 0; i < scatter.size(); ++i) {
      if (bi.assignment[i] == keep) sub.push_back(scatter[i]);
    }
    scatter = std::move(sub);
  }
  auto split = reject_outliers(scatter, cfg.outlier_k, cfg.aggregation);
  out.n_removed = split.removed.size() + (n_in - scatter.size());
  out.kept = std::move(split.kept);
  return out;
}

void summarize(LandmarkEstimate& est, std::vector<Point> scatter, const ScanConfig& cfg) {
  const std::size_t n_in = scatter.size();
  auto sup = support_of(std::move(scatter), est.landmark, cfg);
  est.bimodal = sup.bimodal;
  est.n_outliers_removed = sup.n_removed + (est.n_candidates - n_in);
  est.dispersion = axis_std(sup.kept);
  est.point = aggregate(sup.kept, cfg.aggregation);
  est.missing = false;
}

Point clamp_into(Point p, const patchset::Cephalogram& ceph, bool& clamped) {
  const Point c{std::clamp(p.x, 0.0, static_cast<double>(ceph.width()) - 1.0),
                std::clamp(p.y, 0.0, static_cast<double>(ceph.height()) - 1.0)};
  clamped = clamped || c.x != p.x || c.y != p.y;
  return c;
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void relative_position_filter(IdentifyResult& result, const std::map<std::string, std::vector<Point>>& scatters,
                              const ReferenceOffsets* offsets, const ScanConfig& cfg) {
  if (!offsets || offsets->empty()) {
    result.warnings.push_back("reference offsets missing; soft-tissue filter skipped");
    return;
  }
  std::map<std::string, Point> anchors;
  for (const auto& e : result.estimates) {
    if (e.tissue == Tissue::hard && !e.missing) anchors[e.landmark] = e.point;
  }
  for (auto& e : result.estimates) {
    if (e.tissue != Tissue::soft || e.missing) continue;
    auto st = offsets->table.find(e.landmark);
    auto sc = scatters.find(e.landmark);
    if (st == offsets->table.end() || sc == scatters.end() || sc->second.empty()) continue;
    // Robust spread of the scatter itself, so ordinary estimator noise is not
    // mistaken for an implausible position.
    const Point mid = aggregate(sc->second, Aggregation::median);
    std::vector<double> r;
    for (const auto& p : sc->second) r.push_back(patchset::distance(p, mid));
    const double spread = 1.4826 * median_of(std::move(r));
    std::vector<Point> kept, dropped;
    for (const auto& p : sc->second) {
      const auto z = offset_deviation(p, st->second, anchors, spread);
      (!z || *z <= cfg.soft_filter_scales ? kept : dropped).push_back(p);
    }
    e.filter_applied = true;
    e.n_filtered = sc->second.size() - kept.size();
    if (kept.empty()) {
      e.filter_fallback = true;
      result.warnings.push_back("soft-tissue filter emptied " + e.landmark + "; kept the unfiltered estimate");
      continue;
    }
    // The estimate is re-taken over the points it already rested on, minus the
    // dropped ones. A second outlier pass here would tighten sigma once the far
    // points are gone and trim the cluster's own edge, which has nothing to do
    // with relative position. Only when no support is left (a scatter dominated
    // by wrong points) is the filtered scatter summarized from scratch.
    const auto sup = support_of(sc->second, e.landmark, cfg);
    const auto is_dropped = [&](const Point& q) {
      return std::any_of(dropped.begin(), dropped.end(), [&](const Point& d) { return q.x == d.x && q.y == d.y; });
    };
    std::vector<Point> rest;
    for (const auto& q : sup.kept) {
      if (!is_dropped(q)) rest.push_back(q);
    }
    if (rest.size() == sup.kept.size()) continue;
    if (rest.empty()) {
      LandmarkEstimate redo = e;
      summarize(redo, kept, cfg);
      e.point = redo.point;
      e.bimodal = redo.bimodal;
      e.dispersion = redo.dispersion;
      e.n_outliers_removed = redo.n_outliers_removed - e.n_filtered;
      continue;
    }
    e.point = aggregate(rest, cfg.aggregation);
    e.dispersion = axis_std(rest);
  }
}

template <typename T>
IdentifyResult identify_landmarks(const patchset::Cephalogram& ceph, const ModelSet<T>& models,
                                  const patchset::LandmarkCatalog& catalog, const ScanConfig& cfg,
                                  const ReferenceOffsets* offsets) {
  cfg.validate();
  IdentifyResult result;
  result.case_id = ceph.id;
  const auto scales = cfg.scale_set.empty() ? default_scale_set(catalog) : cfg.scale_set;

  auto t_scan = std::chrono::steady_clock::now();
  const auto candidates = collect_candidates(ceph, models.pc, cfg, scales);
  const double scan_ms = ms_since(t_scan);
  result.timing_ms["scan"] = scan_ms;

  std::map<std::string, std::vector<Point>> scatters;
  for (const auto& spec : catalog.specs()) {
    auto t0 = std::chrono::steady_clock::now();
    LandmarkEstimate est;
    est.landmark = spec.name;
    est.tissue = spec.tissue;
    est.missing = true;
    auto cs = candidates.find(spec.name);
    auto pe = models.pe.find(spec.name);
    if (pe == models.pe.end()) {
      result.warnings.push_back("no PE model for " + spec.name);
    } else if (cs != candidates.end() && !cs->second.candidates.empty()) {
      est.n_candidates = cs->second.candidates.size();
      auto scatter = estimate_scatter(ceph, cs->second, pe->second, cfg);
      summarize(est, scatter, cfg);
      est.point = clamp_into(est.point, ceph, est.clamped);
      scatters[spec.name] = std::move(scatter);
    }
    est.missing_unfiltered = est.missing;
    est.point_unfiltered = est.point;
    result.timing_ms[spec.name] = ms_since(t0) + scan_ms / static_cast<double>(catalog.size());
    result.estimates.push_back(est);
  }

  if (cfg.soft_filter) {
    relative_position_filter(result, scatters, offsets, cfg);
    for (auto& e : result.estimates) {
      if (!e.missing) e.point = clamp_into(e.point, ceph, e.clamped);
    }
  }
  return result;
}

std::string estimates_to_json(const IdentifyResult& result, bool include_timing) {
  json doc;
  doc["case_id"] = result.case_id;
  json est = json::object();
  for (const auto& e : result.estimates) {
    json j;
    j["x"] = e.missing ? json(nullptr) : json(e.point.x);
    j["y"] = e.missing ? json(nullptr) : json(e.point.y);
    j["n_candidates"] = e.n_candidates;
    j["n_outliers_removed"] = e.n_outliers_removed;
    j["bimodal"] = e.bimodal;
    j["missing"] = e.missing;
    j["clamped"] = e.clamped;
    j["tissue"] = std::string(patchset::tissue_name(e.tissue));
    j["dispersion"] = {e.dispersion.x, e.dispersion.y};
    if (e.tissue == Tissue::soft) {
      j["unfiltered"] = {{"x", e.missing_unfiltered ? json(nullptr) : json(e.point_unfiltered.x)},
                         {"y", e.missing_unfiltered ? json(nullptr) : json(e.point_unfiltered.y)},
                         {"missing", e.missing_unfiltered}};
      j["filter"] = {{"applied", e.filter_applied}, {"fallback", e.filter_fallback}, {"dropped", e.n_filtered}};
    }
    est[e.landmark] = j;
  }
  doc["estimates"] = est;
  if (include_timing) doc["timing_ms"] = result.timing_ms;
  doc["warnings"] = result.warnings;
  return doc.dump(2) + "\n";
}

void write_overlay(const patchset::Cephalogram& ceph, const IdentifyResult& result,
                   const patchset::AnnotationSet* truth, const std::filesystem::path& path) {
  patchset::GrayImage img = ceph.image;
  auto cross = [&](Point p, std::uint8_t value) {
    const long cx = std::lround(p.x), cy = std::lround(p.y);
    for (long d = -6; d <= 6; ++d) {
      for (long t = -1; t <= 1; ++t) {
        const long pts[2][2] = {{cx + d, cy + t}, {cx + t, cy + d}};
        for (const auto& q : pts) {
          if (q[0] >= 0 && q[1] >= 0 && q[0] < static_cast<long>(img.width) && q[1] < static_cast<long>(img.height)) {
            img.at(static_cast<std::size_t>(q[0]), static_cast<std::size_t>(q[1])) = value;
          }
        }
      }
    }
  };
  if (truth) {
    for (const auto& [name, p] : truth->points) cross(p.position, 0);
  }
  for (const auto& e : result.estimates) {
    if (!e.missing) cross(e.point, 255);
  }
  patchset::write_png(img, path);
}

#define CEPHLM_INSTANTIATE_PIPELINE(T)                                                                             \
  template std::map<std::string, CandidateSet> collect_candidates<T>(                                            \
      const patchset::Cephalogram&, const PcModel<T>&, const ScanConfig&, const std::vector<std::pair<double, double>>&); \
  template std::vector<Point> estimate_scatter<T>(const patchset::Cephalogram&, const CandidateSet&, const PeModel<T>&, \
                                                  const ScanConfig&);                                               \
  template IdentifyResult identify_landmarks<T>(const patchset::Cephalogram&, const ModelSet<T>&,                  \
                                                const patchset::LandmarkCatalog&, const ScanConfig&,                \
                                                const ReferenceOffsets*);

CEPHLM_INSTANTIATE_PIPELINE(float)
CEPHLM_INSTANTIATE_PIPELINE(double)

}  // namespace cephlm::pipeline
