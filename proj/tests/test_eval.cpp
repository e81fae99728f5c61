#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "ivgan/config.hpp"
#include "ivgan/gradcheck.hpp"
#include "ivgan/io.hpp"

using namespace ivgan;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  fs::path d = fs::temp_directory_path() / "ivgan_test_eval";
  fs::create_directories(d);
  return d;
}

}  // namespace

TEST_CASE("checkpoint: bitwise round-trip, save-load-save identical bytes") {
  NamedTensors tensors;
  tensors.emplace_back("g.project.w", rng_fill<float>(Dist::Normal01, {3, 4}, 1));
  tensors.emplace_back("c.head.b", rng_fill<float>(Dist::Uniform, {5}, 2, -2.f, 2.f));
  tensors.emplace_back("scalar", Tensor<float>({1}, 0.25f));

  fs::path p = temp_dir() / "ckpt.ivgc";
  save_checkpoint(p.string(), tensors);
  NamedTensors back = load_checkpoint(p.string());
  REQUIRE(back.size() == tensors.size());
  for (size_t i = 0; i < tensors.size(); ++i) {
    CHECK(back[i].first == tensors[i].first);
    REQUIRE(back[i].second.shape() == tensors[i].second.shape());
    for (int64_t j = 0; j < tensors[i].second.numel(); ++j)
      CHECK(back[i].second[j] == tensors[i].second[j]);  // bitwise (finite data)
  }
  // save -> load -> save is byte-identical
  fs::path p2 = temp_dir() / "ckpt2.ivgc";
  save_checkpoint(p2.string(), back);
  CHECK(detail::read_file(p.string()) == detail::read_file(p2.string()));
}

TEST_CASE("checkpoint: corruption detected via CRC") {
  NamedTensors tensors;
  tensors.emplace_back("w", rng_fill<float>(Dist::Normal01, {4, 4}, 3));
  fs::path p = temp_dir() / "corrupt.ivgc";
  std::string bytes = checkpoint_bytes(tensors);
  bytes[bytes.size() / 2] ^= 0x40;  // flip one payload bit
  detail::write_file_atomic(p.string(), bytes);
  CHECK_THROWS_AS(load_checkpoint(p.string()), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint("/nonexistent/file.ivgc"), std::runtime_error);
}

TEST_CASE(".ivc: bitwise round-trip and header validation") {
  SynthSpec spec;
  spec.seed = 5;
  Clip clip = synth_clip(spec, 0);
  fs::path p = temp_dir() / "clip.ivc";
  save_clip(p.string(), clip);
  Clip back = load_clip(p.string());
  REQUIRE(back.shape() == clip.shape());
  for (int64_t i = 0; i < clip.numel(); ++i) CHECK(back[i] == clip[i]);
  // byte-exact rewrite
  fs::path p2 = temp_dir() / "clip2.ivc";
  save_clip(p2.string(), back);
  CHECK(detail::read_file(p.string()) == detail::read_file(p2.string()));

  // truncated payload rejected
  std::string bytes = clip_bytes(clip);
  bytes.resize(bytes.size() - 8);
  fs::path p3 = temp_dir() / "trunc.ivc";
  detail::write_file_atomic(p3.string(), bytes);
  CHECK_THROWS_AS(load_clip(p3.string()), std::runtime_error);
}

TEST_CASE("psnr: derived values, sentinel, symmetry") {
  Clip a({1, 10, 10, 1}, 0.0f);
  // identical clips -> capped sentinel
  CHECK(psnr(a, a, PsnrSpace::Gray) == doctest::Approx(99.0));

  // MSE 0.01 in [0,1] space: difference 0.1 there = 0.2 in [-1,1] space
  Clip b = a;
  for (int64_t i = 0; i < b.numel(); ++i) b[i] = 0.2f;
  CHECK(psnr(a, b, PsnrSpace::Rgb) == doctest::Approx(20.0).epsilon(1e-6));

  // MSE 0.0001 -> 40 dB
  Clip c = a;
  for (int64_t i = 0; i < c.numel(); ++i) c[i] = 0.02f;
  CHECK(psnr(a, c, PsnrSpace::Rgb) == doctest::Approx(40.0).epsilon(1e-5));

  // symmetry on random RGB clips, gray and rgb space
  Clip x = rng_fill<float>(Dist::Uniform, {2, 6, 6, 3}, 9, -1.f, 1.f);
  Clip y = rng_fill<float>(Dist::Uniform, {2, 6, 6, 3}, 10, -1.f, 1.f);
  CHECK(psnr(x, y, PsnrSpace::Gray) == doctest::Approx(psnr(y, x, PsnrSpace::Gray)));
  CHECK(psnr(x, y, PsnrSpace::Rgb) == doctest::Approx(psnr(y, x, PsnrSpace::Rgb)));
  // gray mode really projects: chroma-only differences score higher than rgb
  CHECK(psnr(x, y, PsnrSpace::Gray) != psnr(x, y, PsnrSpace::Rgb));

  Clip z({1, 4, 4, 3}, 0.f);
  CHECK_THROWS_AS(psnr(x, z), std::invalid_argument);
}

TEST_CASE("export_frames: mapping, file count, payload bytes") {
  CHECK(to_byte(-1.0f) == 0);
  CHECK(to_byte(1.0f) == 255);
  CHECK(to_byte(0.0f) == 128);  // 127.5 rounds half up

  fs::path d = temp_dir() / "frames";
  fs::create_directories(d);
  Clip clip({3, 2, 2, 3}, -1.0f);
  auto paths = export_frames(clip, d.string());
  REQUIRE(paths.size() == 3);  // T frames -> exactly T files
  for (const auto& p : paths) {
    std::string bytes = detail::read_file(p);
    // P6 header then 2*2*3 zero bytes
    std::string want_header = "P6\n2 2\n255\n";
    REQUIRE(bytes.size() == want_header.size() + 12);
    CHECK(bytes.substr(0, want_header.size()) == want_header);
    for (size_t i = want_header.size(); i < bytes.size(); ++i)
      CHECK(bytes[i] == '\0');
  }
  CHECK_THROWS_AS(export_frames(clip, (d / "missing_subdir").string()),
                  std::runtime_error);
}

TEST_CASE("config: defaults, rejection, resolved idempotence") {
  RunConfig cfg = config_from_json_text("{}");
  // paper defaults
  CHECK(cfg.train.lambda == 10.0);
  CHECK(cfg.train.nu == 1000.0);
  CHECK(cfg.train.alpha == 0.0002);
  CHECK(cfg.train.beta1 == 0.5);
  CHECK(cfg.train.beta2 == 0.99);
  CHECK(cfg.train.critic_ratio == 5);
  CHECK(cfg.train.batch_size == 64);
  CHECK(cfg.net.frames == 32);
  CHECK(cfg.net.height == 64);

  CHECK_THROWS_WITH_AS(config_from_json_text("{\"lambda\": -1}"),
                       doctest::Contains("lambda"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(config_from_json_text("{\"frobnicate\": 1}"),
                       doctest::Contains("frobnicate"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(config_from_json_text("{\"alpha\": \"fast\"}"),
                       doctest::Contains("alpha"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text("[1,2]"), std::invalid_argument);
  CHECK_THROWS_AS(config_from_json_text("not json"), std::invalid_argument);

  // desk scale preset switches geometry; explicit keys survive
  RunConfig desk = config_from_json_text(
      "{\"scale\": \"desk\", \"batch_size\": 16, \"task\": \"inpaint\"}");
  CHECK(desk.net.frames == 8);
  CHECK(desk.net.height == 16);
  CHECK(desk.train.batch_size == 16);
  CHECK(desk.data.frames == 8);

  // resolved-config echo is idempotent
  std::string r1 = resolved_config_text(desk);
  RunConfig again = config_from_json_text(r1);
  std::string r2 = resolved_config_text(again);
  CHECK(r1 == r2);
}

TEST_CASE("gradcheck: full f64 finite-difference suite passes at 1e-4") {
  auto results = run_gradcheck(1e-4);
  CHECK(results.size() > 20);
  for (const auto& r : results) {
    INFO(r.op, " max_rel_err=", r.max_rel_err);
    CHECK(r.pass);
  }
}
