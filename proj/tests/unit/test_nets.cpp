#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cephlm/error.hpp"
#include "cephlm/nets/checkpoint.hpp"
#include "cephlm/nets/model.hpp"
#include "cephlm/nets/train.hpp"
#include "cephlm/numcore/gradcheck.hpp"
#include "cephlm/numcore/ops.hpp"
#include "test_support.hpp"

using namespace cephlm;
using namespace cephlm::nets;
using numcore::Tensor;
using patchset::PatchSample;
using testsupport::random_tensor;

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

ModelArch tiny(ModelKind kind, std::size_t classes = 3) {
  ModelArch a;
  a.kind = kind;
  a.conv_channels = {2, 3, 4};
  a.fc_width = 8;
  a.num_classes = kind == ModelKind::pc ? classes : 0;
  return a;
}

// Class c is a bright square in quadrant c on a dark field; PE samples put a
// bright dot at point_uv.
std::vector<PatchSample> toy_pc_samples(std::size_t per_class, const std::vector<std::string>& labels, Rng& rng) {
  std::vector<PatchSample> out;
  for (std::size_t c = 0; c < labels.size(); ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      PatchSample s;
      s.label = labels[c];
      for (auto& p : s.pixels) p = static_cast<std::uint8_t>(rng.uniform(0, 40));
      const std::size_t ox = (c % 2) * 32, oy = (c / 2) * 32;
      for (std::size_t y = oy + 4; y < oy + 28; ++y)
        for (std::size_t x = ox + 4; x < ox + 28; ++x) s.pixels[y * 64 + x] = 220;
      if (s.label != patchset::kBackground) s.point_uv = std::array<float, 2>{0.5f, 0.5f};
      out.push_back(s);
    }
  }
  return out;
}

std::vector<PatchSample> toy_pe_samples(std::size_t n, Rng& rng) {
  std::vector<PatchSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    PatchSample s;
    s.label = "S";
    const double u = rng.uniform(0.2, 0.8), v = rng.uniform(0.2, 0.8);
    const double cx = u * 64 - 0.5, cy = v * 64 - 0.5;
    for (std::size_t y = 0; y < 64; ++y)
      for (std::size_t x = 0; x < 64; ++x) {
        const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
        s.pixels[y * 64 + x] = static_cast<std::uint8_t>(20 + 200 * std::exp(-d2 / 18.0));
      }
    s.point_uv = std::array<float, 2>{static_cast<float>(u), static_cast<float>(v)};
    out.push_back(s);
  }
  return out;
}

bool same_weights(const Model<float>& a, const Model<float>& b) {
  for (std::size_t i = 0; i < a.params().size(); ++i) {
    const auto& x = a.params()[i].data();
    const auto& y = b.params()[i].data();
    if (x.size() != y.size() || std::memcmp(x.data(), y.data(), x.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

std::string read_all(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_all(const std::filesystem::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

}  // namespace

TEST_SUITE("model") {
  TEST_CASE("three pooling stages reduce 64x64 to 8x8 and the heads have the right arity") {
    Rng rng(1);
    ModelArch pc = tiny(ModelKind::pc, 7);
    CHECK(pc.pooled_size() == 8);
    const auto m = build_model<float>(pc, rng);
    CHECK(m.params().size() == 12);
    CHECK(m.params()[6].shape() == numcore::Shape{8, 4 * 8 * 8});
    auto x = random_tensor<float>({2, 1, 64, 64}, rng, 0.0, 1.0);
    CHECK(m.forward(x).shape() == numcore::Shape{2, 7});
    const auto pe = build_model<float>(tiny(ModelKind::pe), rng);
    CHECK(pe.forward(x).shape() == numcore::Shape{2, 2});
  }

  TEST_CASE("same seed gives identical initial weights") {
    Rng a(42), b(42), c(43);
    const auto ma = build_model<float>(tiny(ModelKind::pc), a);
    const auto mb = build_model<float>(tiny(ModelKind::pc), b);
    const auto mc = build_model<float>(tiny(ModelKind::pc), c);
    CHECK(same_weights(ma, mb));
    CHECK_FALSE(same_weights(ma, mc));
  }

  TEST_CASE("untrained PE starts at the patch centre") {
    Rng rng(3);
    const auto pe = build_model<float>(tiny(ModelKind::pe), rng);
    std::vector<float> zeros(64 * 64, 0.f);
    const auto out = predict_pe(pe, zeros);
    CHECK(out[0][0] == doctest::Approx(0.5));
    CHECK(out[0][1] == doctest::Approx(0.5));
  }

  TEST_CASE("PC probabilities sum to one, including for an all-zero patch") {
    Rng rng(5);
    const auto pc = build_model<float>(tiny(ModelKind::pc, 5), rng);
    std::vector<float> x(3 * 64 * 64);
    for (std::size_t i = 64 * 64; i < x.size(); ++i) x[i] = static_cast<float>(rng.uniform());
    for (const auto& row : predict_pc(pc, x)) {
      double s = 0.0;
      for (double p : row) {
        CHECK(std::isfinite(p));
        CHECK(p >= 0.0);
        s += p;
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    }
  }

  TEST_CASE("architecture validation") {
    ModelArch a = tiny(ModelKind::pc);
    a.conv_channels = {2, 3};
    CHECK(code_of([&] { a.validate(); }) == Errc::invalid_argument);
    a = tiny(ModelKind::pc, 1);
    CHECK(code_of([&] { a.validate(); }) == Errc::invalid_argument);
    a = tiny(ModelKind::pe);
    a.input_size = 20;
    CHECK(code_of([&] { a.validate(); }) == Errc::invalid_argument);
  }

  TEST_CASE("whole-network gradient matches finite differences in 64-bit") {
    ModelArch a;
    a.conv_channels = {2, 2, 3};
    a.fc_width = 4;
    a.num_classes = 3;
    a.input_size = 16;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      Rng rng(900 + seed);
      auto m = build_model<double>(a, rng);
      for (auto& p : m.params())
        for (auto& v : p.data()) v += rng.uniform(-0.05, 0.05);
      const auto x = random_tensor<double>({2, 1, 16, 16}, rng, 0.0, 1.0);
      const std::vector<std::size_t> labels = {rng.index(3), rng.index(3)};
      const double err = numcore::finite_difference_check(
          [&] { return numcore::softmax_cross_entropy(m.forward(x), std::span(labels)).loss; }, m.params(), 1e-5);
      CHECK(err < 1e-4);
    }
  }
}

TEST_SUITE("train") {
  const std::vector<std::string> kLabels = {"A", "B", "C", std::string(patchset::kBackground)};

  TEST_CASE("zero learning rate leaves the weights unchanged") {
    Rng rng(11);
    const auto data = toy_pc_samples(6, kLabels, rng);
    const auto init = build_model<float>(tiny(ModelKind::pc, 4), rng);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 8;
    cfg.adam.lr = 0.0;
    const auto res = train(init, data, kLabels, cfg);
    CHECK(same_weights(res.model, init));
    CHECK(res.history.epochs.size() == 2);
  }

  TEST_CASE("same seed reproduces the trained weights bit for bit") {
    Rng rng(12);
    const auto data = toy_pc_samples(6, kLabels, rng);
    const auto init = build_model<float>(tiny(ModelKind::pc, 4), rng);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 99;
    const auto a = train(init, data, kLabels, cfg);
    const auto b = train(init, data, kLabels, cfg);
    CHECK(same_weights(a.model, b.model));
    CHECK(a.history.to_csv() == b.history.to_csv());
    cfg.seed = 100;
    const auto c = train(init, data, kLabels, cfg);
    CHECK_FALSE(same_weights(a.model, c.model));
  }

  TEST_CASE("PC learns a separable toy problem") {
    Rng rng(13);
    const auto data = toy_pc_samples(30, kLabels, rng);
    ModelArch arch = tiny(ModelKind::pc, 4);
    arch.conv_channels = {4, 8, 8};
    arch.fc_width = 16;
    const auto init = build_model<float>(arch, rng);
    TrainConfig cfg;
    cfg.epochs = 20;
    cfg.batch_size = 16;
    cfg.adam.lr = 2e-3;
    cfg.augment = false;
    const auto res = train(init, data, kLabels, cfg);
    CHECK(res.history.epochs.at(res.best_epoch - 1).val_acc >= 0.9);
  }

  TEST_CASE("PE training loss decreases on a learnable target") {
    Rng rng(14);
    const auto data = toy_pe_samples(200, rng);
    const auto init = build_model<float>(tiny(ModelKind::pe), rng);
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.batch_size = 16;
    cfg.adam.lr = 2e-3;
    cfg.augment = false;
    const auto res = train(init, data, {"S"}, cfg);
    const auto& h = res.history.epochs;
    CHECK(h.back().train_loss < 0.5 * h.front().train_loss);
    CHECK(std::isnan(h.front().val_acc));
    CHECK(res.history.to_csv().find(",\n") != std::string::npos);
  }

  TEST_CASE("structured errors") {
    Rng rng(15);
    const auto init = build_model<float>(tiny(ModelKind::pc, 4), rng);
    TrainConfig cfg;
    cfg.epochs = 1;
    CHECK(code_of([&] { train(init, std::span<const PatchSample>(), kLabels, cfg); }) == Errc::empty_input);
    const auto three = toy_pc_samples(8, {"A", "B", "C"}, rng);
    CHECK(code_of([&] { train(init, three, kLabels, cfg); }) == Errc::class_absent);
    const auto pe = build_model<float>(tiny(ModelKind::pe), rng);
    CHECK(code_of([&] { train(pe, three, {"A"}, cfg); }) == Errc::invalid_argument);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("round trip is bitwise and carries the metadata") {
    testsupport::TempDir dir("ckpt");
    Rng rng(21);
    const auto m = build_model<float>(tiny(ModelKind::pc, 4), rng);
    CheckpointMeta meta;
    meta.labels = {"A", "B", "C", "BACKGROUND"};
    meta.seed = 77;
    meta.best_epoch = 3;
    meta.history.epochs.push_back({1, 1.5, 1.25, 0.5});
    save_checkpoint(m, meta, dir.path() / "m.ckpt");
    CheckpointMeta back;
    const auto loaded = load_checkpoint<float>(dir.path() / "m.ckpt", &back);
    CHECK(loaded.arch() == m.arch());
    CHECK(same_weights(loaded, m));
    CHECK(back.labels == meta.labels);
    CHECK(back.seed == 77);
    CHECK(back.best_epoch == 3);
    CHECK(back.history.to_csv() == meta.history.to_csv());

    save_checkpoint(loaded, back, dir.path() / "again.ckpt");
    CHECK(read_all(dir.path() / "m.ckpt") == read_all(dir.path() / "again.ckpt"));
  }

  TEST_CASE("damaged, foreign and mismatched files are rejected") {
    testsupport::TempDir dir("ckpt_bad");
    Rng rng(22);
    const auto m = build_model<float>(tiny(ModelKind::pe), rng);
    const auto path = dir.path() / "m.ckpt";
    save_checkpoint(m, {}, path);
    const std::string good = read_all(path);

    CHECK(code_of([&] { load_checkpoint<float>(dir.path() / "none.ckpt"); }) == Errc::missing_file);

    write_all(path, good.substr(0, good.size() / 2));
    CHECK(code_of([&] { load_checkpoint<float>(path); }) == Errc::corrupt_file);

    std::string flipped = good;
    flipped[good.size() / 2] ^= 0x5a;
    write_all(path, flipped);
    CHECK(code_of([&] { load_checkpoint<float>(path); }) == Errc::corrupt_file);

    std::string bumped = good;
    bumped[8] = static_cast<char>(kCheckpointVersion + 1);
    write_all(path, bumped);
    CHECK(code_of([&] { load_checkpoint<float>(path); }) == Errc::version_mismatch);

    write_all(path, good);
    CHECK(code_of([&] { load_checkpoint<double>(path); }) == Errc::arch_mismatch);
    ModelArch other = m.arch();
    other.fc_width = 16;
    CHECK(code_of([&] { load_checkpoint<float>(path, nullptr, &other); }) == Errc::arch_mismatch);
    CHECK_NOTHROW(load_checkpoint<float>(path, nullptr, &m.arch()));
  }
}
