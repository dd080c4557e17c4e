#include "support/doctest.hpp"

#include <fstream>
#include <set>

#include "dcm/dataset.hpp"
#include "dcm/errors.hpp"
#include "dcm/haze_model.hpp"
#include "dcm/image_io.hpp"
#include "support/temp_dir.hpp"

using namespace dcm;
using namespace dcm::data;
namespace fs = std::filesystem;

namespace {

SynthOptions small_synth(int64_t n, uint64_t seed) {
  SynthOptions o;
  o.count = n;
  o.size = 32;
  o.seed = seed;
  return o;
}

void write_noise_images(const fs::path& dir, int n, int64_t size, uint64_t seed) {
  for (int i = 0; i < n; ++i) {
    torch::manual_seed(seed + i);
    io::write_image(dir / ("img" + std::to_string(i) + ".png"),
                    Image::from_tensor(torch::rand({3, size, size}, torch::kFloat64)));
  }
}

}  // namespace

TEST_SUITE("dataset") {
  TEST_CASE("synthetic datasets are byte-identical per seed") {
    test::TempDir a, b;
    build_synthetic_dataset(small_synth(6, 7), a.path());
    build_synthetic_dataset(small_synth(6, 7), b.path());
    size_t files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a.path())) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), a.path());
      CHECK(test::read_file(e.path()) == test::read_file(b.path() / rel));
      ++files;
    }
    CHECK(files == 6 * 3 + 1);

    test::TempDir c;
    build_synthetic_dataset(small_synth(6, 8), c.path());
    CHECK(test::read_file(a.path() / "hazy" / "000000.png") != test::read_file(c.path() / "hazy" / "000000.png"));
  }

  TEST_CASE("entries carry full provenance and reload") {
    test::TempDir dir;
    const auto built = build_synthetic_dataset(small_synth(10, 3), dir.path());
    CHECK(built.entries.size() == 10);
    const auto m = load_manifest(dir.path());
    REQUIRE(m.entries.size() == 10);
    for (const auto& e : m.entries) {
      CHECK(e.clean.has_value());
      CHECK(e.depth.has_value());
      CHECK(e.params.has_value());
      CHECK(e.depth_scale.has_value());
      CHECK(e.params->beta >= 0.4);
      CHECK(e.params->beta <= 2.0);
      for (double a : e.params->airlight) {
        CHECK(a >= 0.7);
        CHECK(a <= 1.0);
      }
    }
  }

  TEST_CASE("stored triples invert back to the clean image") {
    test::TempDir dir;
    const auto m = build_synthetic_dataset(small_synth(12, 11), dir.path());
    for (const auto& e : m.entries) {
      const auto hazy = io::read_image(m.resolve(e.hazy));
      const auto clean = io::read_image(m.resolve(*e.clean));
      const auto depth = io::read_depth_png(m.resolve(*e.depth), *e.depth_scale);
      const auto back = haze::invert_haze(hazy, depth, *e.params);
      // 8-bit storage of the hazy image is amplified by 1/t; the mean stays inside the budget
      CHECK((back.tensor() - clean.tensor()).abs().mean().item<double>() <= 1e-2);
    }
  }

  TEST_CASE("training pools are disjoint halves") {
    test::TempDir dir;
    const auto m = build_synthetic_dataset(small_synth(10, 5), dir.path());
    CHECK(m.hazy_pool.size() == 5);
    CHECK(m.clean_pool.size() == 5);
    std::set<std::string> hazy_ids;
    for (const auto& p : m.hazy_pool) hazy_ids.insert(p.id);
    for (const auto& p : m.clean_pool) CHECK(hazy_ids.count(p.id) == 0);
  }

  TEST_CASE("manifest validation") {
    test::TempDir dir;
    build_synthetic_dataset(small_synth(4, 1), dir.path());
    fs::remove(dir.path() / "clean" / "000002.png");
    CHECK_THROWS_AS(load_manifest(dir.path()), DatasetError);
    test::TempDir empty;
    CHECK_THROWS_AS(load_manifest(empty.path()), DatasetError);
    SynthOptions bad = small_synth(1, 0);
    CHECK_THROWS_AS(bad.validate(), ParameterError);
  }

  TEST_CASE("unpaired folders") {
    test::TempDir dir;
    write_noise_images(dir.path() / "hazy", 5, 24, 100);
    write_noise_images(dir.path() / "clean", 7, 24, 200);
    auto m = load_unpaired(dir.path() / "hazy", dir.path() / "clean");
    CHECK(m.hazy_pool.size() == 5);
    CHECK(m.clean_pool.size() == 7);
    CHECK(m.warnings.empty());

    std::ofstream(dir.path() / "hazy" / "notes.txt") << "not an image";
    m = load_unpaired(dir.path() / "hazy", dir.path() / "clean");
    CHECK(m.hazy_pool.size() == 5);
    CHECK(m.warnings.size() == 1);

    auto same = load_unpaired(dir.path() / "clean", dir.path() / "clean");
    CHECK(same.hazy_pool.size() == same.clean_pool.size());
    UnpairedSampler sampler(same);
    SampleOptions opts;
    opts.crop = 24;
    opts.batch_size = 4;
    opts.horizontal_flip = false;
    bool any_differs = false;
    for (uint64_t step = 0; step < 10; ++step) {
      auto b = sampler.sample(opts, 1, step);
      any_differs = any_differs || b.hazy_ids != b.clean_ids;
    }
    CHECK(any_differs);

    test::TempDir nothing;
    fs::create_directories(nothing.path() / "a");
    CHECK_THROWS_AS(load_unpaired(nothing.path() / "a", dir.path() / "clean"), DatasetError);
  }

  TEST_CASE("sampling is a pure function of seed and step") {
    test::TempDir dir;
    const auto m = build_synthetic_dataset(small_synth(8, 2), dir.path());
    UnpairedSampler s1(m), s2(m);
    SampleOptions opts;
    opts.crop = 16;
    auto a = s1.sample(opts, 9, 4);
    auto b = s2.sample(opts, 9, 4);
    CHECK(torch::equal(a.hazy, b.hazy));
    CHECK(torch::equal(a.clean, b.clean));
    CHECK(a.hazy_ids == b.hazy_ids);
    auto c = s1.sample(opts, 9, 5);
    CHECK_FALSE((torch::equal(a.hazy, c.hazy) && torch::equal(a.clean, c.clean)));

    CHECK(a.hazy.sizes() == torch::IntArrayRef({2, 3, 16, 16}));
    CHECK(a.hazy.dtype() == torch::kFloat32);
    for (uint64_t step = 0; step < 20; ++step) {
      auto x = s1.sample(opts, 0, step);
      CHECK(x.hazy.min().item<double>() >= 0.0);
      CHECK(x.hazy.max().item<double>() <= 1.0);
      CHECK(x.clean.min().item<double>() >= 0.0);
      CHECK(x.clean.max().item<double>() <= 1.0);
    }
  }

  TEST_CASE("sampling never draws across pools") {
    test::TempDir dir;
    const auto m = build_synthetic_dataset(small_synth(10, 4), dir.path());
    std::set<std::string> hazy_ids, clean_ids;
    for (const auto& p : m.hazy_pool) hazy_ids.insert(p.id);
    for (const auto& p : m.clean_pool) clean_ids.insert(p.id);
    UnpairedSampler s(m);
    SampleOptions opts;
    opts.crop = 32;
    for (uint64_t step = 0; step < 50; ++step) {
      auto b = s.sample(opts, 3, step);
      for (const auto& id : b.hazy_ids) CHECK(hazy_ids.count(id) == 1);
      for (const auto& id : b.clean_ids) CHECK(clean_ids.count(id) == 1);
    }
  }

  TEST_CASE("full-size crop and crop coverage") {
    test::TempDir dir;
    write_noise_images(dir.path() / "hazy", 1, 300, 1);
    write_noise_images(dir.path() / "clean", 1, 300, 2);
    auto m = load_unpaired(dir.path() / "hazy", dir.path() / "clean");
    UnpairedSampler s(m);

    SampleOptions full;
    full.crop = 300;
    full.batch_size = 1;
    full.horizontal_flip = false;
    auto b = s.sample(full, 0, 0);
    const auto img = io::read_image(dir.path() / "hazy" / "img0.png");
    CHECK(torch::equal(b.hazy[0], img.tensor().to(torch::kFloat32)));
    CHECK(b.hazy_crops[0].top == 0);
    CHECK(b.hazy_crops[0].left == 0);

    SampleOptions opts;
    opts.crop = 256;
    opts.batch_size = 1;
    std::set<int64_t> tops, lefts;
    for (uint64_t step = 0; step < 1000; ++step) {
      auto x = s.sample(opts, 17, step);
      for (const auto& r : x.hazy_crops) {
        tops.insert(r.top);
        lefts.insert(r.left);
      }
    }
    CHECK(tops.size() == 45);
    CHECK(lefts.size() == 45);
    CHECK(*tops.begin() == 0);
    CHECK(*tops.rbegin() == 44);
    CHECK(*lefts.begin() == 0);
    CHECK(*lefts.rbegin() == 44);

    SampleOptions too_big;
    too_big.crop = 301;
    CHECK_THROWS_AS(s.sample(too_big, 0, 0), ShapeError);
    too_big.allow_upscale = true;
    CHECK(s.sample(too_big, 0, 0).hazy.size(2) == 301);
  }

  TEST_CASE("procedural scenes") {
    auto a = procedural_scene(48, 5);
    auto b = procedural_scene(48, 5);
    CHECK(torch::equal(a.tensor(), b.tensor()));
    CHECK(a.tensor().min().item<double>() >= 0.0);
    CHECK(a.tensor().max().item<double>() <= 1.0);
    CHECK(a.tensor().std().item<double>() > 0.02);
  }
}
