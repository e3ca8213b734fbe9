#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <json.hpp>

#include "cephlm/error.hpp"
#include "cephlm/pipeline/pipeline.hpp"
#include "cephlm/rng.hpp"
#include "cephlm/synth/synthceph.hpp"
#include "test_support.hpp"

using namespace cephlm;
using namespace cephlm::pipeline;
using patchset::Tissue;

namespace {

Errc code_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected cephlm::Error");
  return Errc::invalid_argument;
}

nets::ModelArch small_arch(nets::ModelKind kind, std::size_t classes = 0) {
  nets::ModelArch a;
  a.kind = kind;
  a.conv_channels = {2, 2, 2};
  a.fc_width = 4;
  a.num_classes = classes;
  return a;
}

// All weights zero: the output is the head bias whatever the patch.
template <typename T = float>
nets::Model<T> constant_model(const nets::ModelArch& arch, const std::vector<double>& head_bias) {
  Rng rng(0);
  auto m = nets::build_model<T>(arch, rng);
  for (auto& p : m.params())
    for (auto& v : p.data()) v = 0;
  auto bias = m.params().back().data();
  for (std::size_t i = 0; i < head_bias.size(); ++i) bias[i] = static_cast<T>(head_bias[i]);
  return m;
}

patchset::Cephalogram blank(std::size_t w, std::size_t h) {
  patchset::Cephalogram c;
  c.id = "blank";
  c.image.width = w;
  c.image.height = h;
  c.image.pixels.assign(w * h, 100);
  return c;
}

std::vector<Point> blob(Point c, double sigma, std::size_t n, Rng& rng) {
  std::vector<Point> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back({c.x + sigma * rng.normal(), c.y + sigma * rng.normal()});
  return out;
}

patchset::LandmarkCatalog two_landmarks() {
  patchset::LandmarkSpec a{"S", Tissue::hard, 80, 144, {}, 4};
  patchset::LandmarkSpec b{"Ls", Tissue::soft, 80, 144, {}, 4};
  return patchset::LandmarkCatalog({a, b});
}

}  // namespace

TEST_SUITE("grid") {
  TEST_CASE("spec arithmetic") {
    CHECK(generate_grid(2100, 2500, 50).size() == 42 * 50);
    const auto g = generate_grid(64, 64, 32);
    REQUIRE(g.size() == 4);
    CHECK(g[0].x == 0);
    CHECK(g[0].y == 0);
    CHECK(g[1].x == 0);
    CHECK(g[1].y == 32);
    CHECK(g[2].x == 32);
    CHECK(g[2].y == 0);
    CHECK(g[3].x == 32);
    CHECK(g[3].y == 32);
    const auto one = generate_grid(10, 10, 100);
    REQUIRE(one.size() == 1);
    CHECK(one[0].x == 0);
    CHECK(code_of([] { generate_grid(10, 10, 0.5); }) == Errc::invalid_argument);
  }

  TEST_CASE("points lie inside the image and shrink with stride") {
    std::size_t prev = SIZE_MAX;
    for (double stride : {1.0, 7.0, 16.0, 32.0, 33.5, 90.0}) {
      const auto g = generate_grid(300, 200, stride);
      for (const auto& p : g) CHECK(patchset::inside_image(p, 300, 200));
      CHECK(g.size() <= prev);
      prev = g.size();
    }
  }

  TEST_CASE("windows are shifted inside when they fit") {
    const Rect r = window_at({0, 0}, 80, 80, 512, 512);
    CHECK(r.x0 == 0);
    CHECK(r.y0 == 0);
    const Rect e = window_at({511, 300}, 80, 100, 512, 512);
    CHECK(e.x0 + e.w <= 511);
    CHECK(e.y0 == 250);
    const Rect big = window_at({10, 10}, 600, 600, 512, 512);
    CHECK(big.x0 == -290);
  }

  TEST_CASE("default scale set") {
    patchset::LandmarkSpec s{"S", Tissue::hard, 80, 320, {{1.0, 0.5}}, 10};
    const auto set = default_scale_set(patchset::LandmarkCatalog({s}));
    REQUIRE(set.size() == 6);
    CHECK(set[0] == std::pair<double, double>{80, 80});
    CHECK(set[4] == std::pair<double, double>{320, 320});
    CHECK(set[5] == std::pair<double, double>{192, 96});
  }
}

TEST_SUITE("aggregate and outliers") {
  TEST_CASE("spec examples") {
    const std::vector<Point> three = {{0, 0}, {2, 2}, {4, 4}};
    const Point m = aggregate(three, Aggregation::median);
    CHECK(m.x == 2);
    CHECK(m.y == 2);
    const std::vector<Point> two = {{0, 0}, {4, 0}};
    const Point mean = aggregate(two, Aggregation::mean);
    CHECK(mean.x == 2);
    CHECK(mean.y == 0);
    CHECK(code_of([] { aggregate({}, Aggregation::mean); }) == Errc::empty_input);
    CHECK(code_of([] { reject_outliers({}, 2.0); }) == Errc::empty_input);
  }

  TEST_CASE("median ignores one extreme point and input order") {
    Rng rng(4);
    auto pts = blob({50, 60}, 1.0, 51, rng);
    const Point before = aggregate(pts, Aggregation::median);
    auto more = pts;
    more.push_back({5000, -4000});
    const Point after = aggregate(more, Aggregation::median);
    CHECK(std::abs(after.x - before.x) < 0.2);
    for (int i = 0; i < 20; ++i) {
      rng.shuffle(pts);
      const Point p = aggregate(pts, Aggregation::median);
      CHECK(p.x == before.x);
      CHECK(p.y == before.y);
    }
  }

  TEST_CASE("identical points remove nothing") {
    const std::vector<Point> same(12, Point{3, 4});
    const auto s = reject_outliers(same, 2.0);
    CHECK(s.sigma == 0.0);
    CHECK(s.removed.empty());
    CHECK(s.kept.size() == 12);
  }

  TEST_CASE("a 500 px outlier beside a tight 100-point cluster is the only removal") {
    Rng rng(5);
    std::vector<Point> pts;
    for (int i = 0; i < 100; ++i) pts.push_back({200 + rng.uniform(-0.5, 0.5), 300 + rng.uniform(-0.5, 0.5)});
    const Point clean = aggregate(pts, Aggregation::median);
    pts.push_back({700, 300});
    const auto s = reject_outliers(pts, 2.0);
    REQUIRE(s.removed.size() == 1);
    CHECK(s.removed[0].x == 700);
    // Hand value: the outlier dominates, sigma ~ sqrt(500^2 / 101) ~ 49.8.
    CHECK(s.sigma == doctest::Approx(500.0 / std::sqrt(101.0)).epsilon(0.01));
    const Point p = aggregate(s.kept, Aggregation::median);
    CHECK(std::hypot(p.x - clean.x, p.y - clean.y) < 0.1);
  }

  TEST_CASE("constant distance sets keep every point for k > 1") {
    Rng rng(6);
    for (int rep = 0; rep < 50; ++rep) {
      const double r = rng.uniform(1, 50);
      const std::size_t n = 4 + 2 * rng.index(10);
      std::vector<Point> ring;
      for (std::size_t i = 0; i < n; ++i) {
        const double t = 2 * 3.141592653589793 * static_cast<double>(i) / static_cast<double>(n);
        ring.push_back({100 + r * std::cos(t), 100 + r * std::sin(t)});
      }
      CHECK(reject_outliers(ring, 2.0, Aggregation::mean).removed.empty());
      CHECK(reject_outliers(ring, 1.01, Aggregation::median).removed.empty());
    }
  }

  TEST_CASE("huge k removes nothing") {
    Rng rng(7);
    auto pts = blob({0, 0}, 5, 80, rng);
    pts.push_back({1e4, 1e4});
    CHECK(reject_outliers(pts, 1e9).removed.empty());
  }
}

TEST_SUITE("bimodality") {
  TEST_CASE("single blobs rarely flag, separated pairs almost always do") {
    int false_pos = 0, hits = 0;
    for (std::uint64_t t = 0; t < 200; ++t) {
      Rng rng(1000 + t);
      const auto one = blob({100, 100}, 4, 60, rng);
      false_pos += detect_bimodality(one, t).flag;
      auto two = blob({100, 100}, 4, 30, rng);
      const auto other = blob({140, 100}, 4, 30, rng);
      two.insert(two.end(), other.begin(), other.end());
      const auto b = detect_bimodality(two, t);
      hits += b.flag;
    }
    CHECK(false_pos < 10);
    CHECK(hits > 190);
  }

  TEST_CASE("identical points and tiny sets do not flag") {
    CHECK_FALSE(detect_bimodality(std::vector<Point>(4, Point{1, 1})).flag);
    CHECK_FALSE(detect_bimodality(std::vector<Point>{{0, 0}, {100, 100}}).flag);
  }

  TEST_CASE("centres land on the two blobs") {
    Rng rng(9);
    auto pts = blob({50, 50}, 2, 20, rng);
    const auto b2 = blob({50, 150}, 2, 20, rng);
    pts.insert(pts.end(), b2.begin(), b2.end());
    const auto b = detect_bimodality(pts, 3);
    REQUIRE(b.flag);
    const double lo = std::min(b.centers[0].y, b.centers[1].y), hi = std::max(b.centers[0].y, b.centers[1].y);
    CHECK(lo == doctest::Approx(50).epsilon(0.05));
    CHECK(hi == doctest::Approx(150).epsilon(0.05));
  }
}

TEST_SUITE("relative position filter") {
  ReferenceOffsets offsets_for(Point anchor, Point soft, double jitter) {
    std::vector<patchset::AnnotationSet> train;
    Rng rng(12);
    for (int i = 0; i < 40; ++i) {
      patchset::AnnotationSet a;
      const Point shift{rng.uniform(-20, 20), rng.uniform(-20, 20)};
      a.points["S"] = {{anchor.x + shift.x, anchor.y + shift.y}, Tissue::hard};
      a.points["Ls"] = {{soft.x + shift.x + jitter * rng.normal(), soft.y + shift.y + jitter * rng.normal()},
                        Tissue::soft};
      train.push_back(a);
    }
    return build_reference_offsets(train, two_landmarks());
  }

  TEST_CASE("offset table holds median and floored robust scale") {
    const auto off = offsets_for({100, 100}, {300, 250}, 0.0);
    const auto& st = off.table.at("Ls").at("S");
    CHECK(st.count == 40);
    CHECK(st.median.x == doctest::Approx(200));
    CHECK(st.median.y == doctest::Approx(150));
    CHECK(st.scale == 1.0);
    CHECK(off.table.count("S") == 0);
  }

  IdentifyResult result_with(Point s, Point ls) {
    IdentifyResult r;
    r.case_id = "x";
    LandmarkEstimate a;
    a.landmark = "S";
    a.point = s;
    a.n_candidates = 10;
    LandmarkEstimate b;
    b.landmark = "Ls";
    b.tissue = Tissue::soft;
    b.point = ls;
    b.point_unfiltered = ls;
    b.n_candidates = 10;
    r.estimates = {a, b};
    return r;
  }

  TEST_CASE("points at the training offsets are all kept") {
    const auto off = offsets_for({100, 100}, {300, 250}, 3.0);
    auto r = result_with({110, 90}, {310, 240});
    std::map<std::string, std::vector<Point>> sc{{"Ls", std::vector<Point>(10, Point{310, 240})}};
    relative_position_filter(r, sc, &off, ScanConfig{});
    const auto* e = r.find("Ls");
    CHECK(e->filter_applied);
    CHECK(e->n_filtered == 0);
    CHECK(e->point.x == 310);
  }

  TEST_CASE("an injected decoy cluster 200 px away is dropped and the error falls") {
    const auto off = offsets_for({100, 100}, {300, 250}, 3.0);
    Rng rng(13);
    const Point truth{305, 255};
    auto scatter = blob(truth, 2.0, 12, rng);
    const auto decoy = blob({truth.x, truth.y - 200}, 2.0, 14, rng);
    scatter.insert(scatter.end(), decoy.begin(), decoy.end());
    const Point unfiltered = aggregate(scatter, Aggregation::median);
    auto r = result_with({105, 105}, unfiltered);
    relative_position_filter(r, {{"Ls", scatter}}, &off, ScanConfig{});
    const auto* e = r.find("Ls");
    CHECK(e->n_filtered == 14);
    CHECK_FALSE(e->filter_fallback);
    CHECK(std::hypot(e->point.x - truth.x, e->point.y - truth.y) < 2.0);
    CHECK(std::hypot(e->point.x - truth.x, e->point.y - truth.y) <
          std::hypot(unfiltered.x - truth.x, unfiltered.y - truth.y));
    CHECK(e->point_unfiltered.x == unfiltered.x);
  }

  TEST_CASE("estimator noise around the right position is not filtered") {
    // Tight anatomy (scale 1 px) but a wide scatter: without the scatter's own
    // spread most points would sit beyond 3 scales.
    const auto off = offsets_for({100, 100}, {300, 250}, 0.0);
    Rng rng(17);
    const auto scatter = blob({300, 250}, 8.0, 40, rng);
    std::size_t beyond = 0;
    for (const auto& p : scatter) beyond += *offset_deviation(p, off.table.at("Ls"), {{"S", {100, 100}}}) > 3.0;
    CHECK(beyond > 20);
    auto r = result_with({100, 100}, aggregate(scatter, Aggregation::median));
    relative_position_filter(r, {{"Ls", scatter}}, &off, ScanConfig{});
    CHECK(r.find("Ls")->n_filtered == 0);
  }

  TEST_CASE("dropping only already rejected points leaves the estimate as it is") {
    const auto off = offsets_for({100, 100}, {300, 250}, 3.0);
    Rng rng(23);
    auto scatter = blob({300, 250}, 2.0, 40, rng);
    scatter.push_back({300, 450});
    const auto before = reject_outliers(scatter, 2.0);
    REQUIRE(before.removed.size() == 1);
    const Point est = aggregate(before.kept, Aggregation::median);
    auto r = result_with({100, 100}, est);
    relative_position_filter(r, {{"Ls", scatter}}, &off, ScanConfig{});
    const auto* e = r.find("Ls");
    CHECK(e->n_filtered == 1);
    CHECK(e->point.x == est.x);
    CHECK(e->point.y == est.y);
  }

  TEST_CASE("dropped support points are left out without a second outlier pass") {
    const auto off = offsets_for({100, 100}, {300, 250}, 3.0);
    Rng rng(29);
    auto scatter = blob({300, 250}, 2.0, 40, rng);
    // Close enough to survive the outlier pass, far enough to fail the filter.
    for (int i = 0; i < 16; ++i) scatter.push_back({300, 290.0 + 0.1 * i});
    const auto before = reject_outliers(scatter, 2.0);
    REQUIRE(before.removed.empty());
    auto r = result_with({100, 100}, aggregate(before.kept, Aggregation::median));
    relative_position_filter(r, {{"Ls", scatter}}, &off, ScanConfig{});
    const std::vector<Point> rest(scatter.begin(), scatter.begin() + 40);
    const Point want = aggregate(rest, Aggregation::median);
    const auto* e = r.find("Ls");
    CHECK(e->n_filtered == 16);
    CHECK(e->point.x == want.x);
    CHECK(e->point.y == want.y);
  }

  TEST_CASE("a filter that empties the set falls back with a warning") {
    const auto off = offsets_for({100, 100}, {300, 250}, 3.0);
    auto r = result_with({100, 100}, {300, 50});
    relative_position_filter(r, {{"Ls", std::vector<Point>(5, Point{300, 50})}}, &off, ScanConfig{});
    const auto* e = r.find("Ls");
    CHECK(e->filter_fallback);
    CHECK(e->point.y == 50);
    CHECK(r.warnings.size() == 1);
  }

  TEST_CASE("missing table skips the filter with a warning") {
    auto r = result_with({100, 100}, {300, 50});
    relative_position_filter(r, {}, nullptr, ScanConfig{});
    CHECK_FALSE(r.find("Ls")->filter_applied);
    CHECK(r.warnings.size() == 1);
  }
}

TEST_SUITE("scan and identify") {
  TEST_CASE("scatter maps (u, v) through each rect") {
    const auto ceph = blank(512, 512);
    CandidateSet cs{"S", {{{100, 200, 128, 128}, 0.95, 0, 0}, {{10, 20, 80, 160}, 0.95, 1, 0}}};
    PeModel<float> centre{constant_model(small_arch(nets::ModelKind::pe), {0.5, 0.5}), "S"};
    const auto pts = estimate_scatter(ceph, cs, centre, ScanConfig{});
    CHECK(pts[0].x == doctest::Approx(164));
    CHECK(pts[0].y == doctest::Approx(264));
    CHECK(pts[1].x == doctest::Approx(50));
    CHECK(pts[1].y == doctest::Approx(100));
    PeModel<float> corner{constant_model(small_arch(nets::ModelKind::pe), {0.0, 0.0}), "S"};
    const auto tl = estimate_scatter(ceph, cs, corner, ScanConfig{});
    CHECK(tl[0].x == doctest::Approx(100));
    CHECK(tl[0].y == doctest::Approx(200));
    PeModel<float> far{constant_model(small_arch(nets::ModelKind::pe), {3.0, -3.0}), "S"};
    const auto cl = estimate_scatter(ceph, cs, far, ScanConfig{});
    CHECK(cl[0].x == doctest::Approx(100 + 1.25 * 128));
    CHECK(cl[0].y == doctest::Approx(200 - 0.25 * 128));
    PeModel<float> wrong{centre.model, "Ls"};
    CHECK(code_of([&] { estimate_scatter(ceph, cs, wrong, ScanConfig{}); }) == Errc::model_mismatch);
  }

  TEST_CASE("candidate counts shrink with threshold and stride") {
    // Softmax of biases (2, 0, 0): P(S) = 0.787 for every patch.
    PcModel<float> pc{constant_model(small_arch(nets::ModelKind::pc, 3), {2.0, 0.0, 0.0}), {"S", "Ls", "BACKGROUND"}};
    const auto ceph = blank(256, 256);
    const std::vector<std::pair<double, double>> scales = {{80, 80}, {128, 128}};
    std::size_t prev = SIZE_MAX;
    for (double thr : {0.5, 0.78, 0.79, 0.9999}) {
      ScanConfig cfg;
      cfg.pc_confidence_threshold = thr;
      const auto c = collect_candidates(ceph, pc, cfg, scales);
      CHECK(c.count("Ls") == 1);
      CHECK(c.count("BACKGROUND") == 0);
      const std::size_t n = c.at("S").candidates.size();
      CHECK(n <= prev);
      prev = n;
    }
    CHECK(prev == 0);
    prev = SIZE_MAX;
    for (double stride : {16.0, 32.0, 64.0}) {
      ScanConfig cfg;
      cfg.pc_confidence_threshold = 0.5;
      cfg.grid_stride_px = stride;
      const std::size_t n = collect_candidates(ceph, pc, cfg, scales).at("S").candidates.size();
      CHECK(n == generate_grid(256, 256, stride).size() * 2);
      CHECK(n <= prev);
      prev = n;
    }
  }

  TEST_CASE("results do not depend on the worker count") {
    Rng rng(3);
    nets::ModelArch arch = small_arch(nets::ModelKind::pc, 3);
    PcModel<float> pc{nets::build_model<float>(arch, rng), {"S", "Ls", "BACKGROUND"}};
    const auto sc = synth::generate_case(4, synth::SynthParams{}, "c");
    ScanConfig cfg;
    cfg.pc_confidence_threshold = 0.34;
    cfg.batch_size = 7;
    const std::vector<std::pair<double, double>> scales = {{80, 80}, {120, 90}};
    const auto one = collect_candidates(sc.data.ceph, pc, cfg, scales);
    cfg.jobs = 3;
    const auto three = collect_candidates(sc.data.ceph, pc, cfg, scales);
    for (const auto& [name, set] : one) {
      const auto& other = three.at(name).candidates;
      REQUIRE(other.size() == set.candidates.size());
      for (std::size_t i = 0; i < other.size(); ++i) {
        CHECK(other[i].grid_index == set.candidates[i].grid_index);
        CHECK(other[i].scale_index == set.candidates[i].scale_index);
        CHECK(other[i].confidence == set.candidates[i].confidence);
      }
    }
  }

  TEST_CASE("untrained models give missing landmarks without crashing") {
    Rng rng(8);
    const auto catalog = two_landmarks();
    ModelSet<float> models;
    models.pc = {nets::build_model<float>(small_arch(nets::ModelKind::pc, 3), rng), catalog.class_labels()};
    for (const auto& n : catalog.names()) {
      models.pe.emplace(n, PeModel<float>{nets::build_model<float>(small_arch(nets::ModelKind::pe), rng), n});
    }
    ScanConfig cfg;
    cfg.pc_confidence_threshold = 0.9999;
    cfg.scale_set = {{80, 80}};
    const auto sc = synth::generate_case(2, synth::SynthParams{}, "c");
    const auto r = identify_landmarks(sc.data.ceph, models, catalog, cfg);
    for (const auto& e : r.estimates) CHECK(e.missing);
    const auto doc = nlohmann::json::parse(estimates_to_json(r));
    CHECK(doc["estimates"]["S"]["missing"].get<bool>());
    CHECK(doc["estimates"]["S"]["x"].is_null());
    CHECK(doc["timing_ms"].contains("S"));
  }

  TEST_CASE("estimates are clamped into the image and flagged") {
    const auto catalog = two_landmarks();
    ModelSet<float> models;
    models.pc = {constant_model(small_arch(nets::ModelKind::pc, 3), {5.0, 0.0, 0.0}), catalog.class_labels()};
    for (const auto& n : catalog.names()) {
      models.pe.emplace(n, PeModel<float>{constant_model(small_arch(nets::ModelKind::pe), {1.25, -0.25}), n});
    }
    ScanConfig cfg;
    cfg.grid_stride_px = 64;
    cfg.scale_set = {{80, 80}, {300, 300}};
    cfg.soft_filter = false;
    const auto ceph = blank(200, 160);
    const auto r = identify_landmarks(ceph, models, catalog, cfg);
    const auto* s = r.find("S");
    REQUIRE_FALSE(s->missing);
    CHECK(s->n_candidates == generate_grid(200, 160, 64).size() * 2);
    CHECK(s->n_candidates >= s->n_outliers_removed);
    CHECK(patchset::inside_image(s->point, 200, 160));
    CHECK(r.find("Ls")->missing);

    models.pe.erase("Ls");
    const auto r2 = identify_landmarks(ceph, models, catalog, cfg);
    CHECK(r2.warnings.size() == 1);
  }

  TEST_CASE("overlay is written") {
    testsupport::TempDir dir("overlay");
    const auto sc = synth::generate_case(1, synth::SynthParams{}, "c");
    IdentifyResult r;
    LandmarkEstimate e;
    e.landmark = "S";
    e.point = {130, 150};
    r.estimates.push_back(e);
    write_overlay(sc.data.ceph, r, &sc.data.annotations, dir.path() / "o.png");
    const auto img = patchset::read_image(dir.path() / "o.png");
    CHECK(img.width == 512);
    CHECK(img.at(130, 150) == 255);
  }
}
