#include "support/doctest.hpp"

#include <fstream>

#include "dcm/errors.hpp"
#include "dcm/image.hpp"
#include "dcm/image_io.hpp"
#include "dcm/weight_archive.hpp"
#include "support/temp_dir.hpp"

using namespace dcm;
namespace fs = std::filesystem;

namespace {

nn::GeneratorConfig small_generator(nn::GeneratorToggles toggles = {}) {
  nn::GeneratorConfig c;
  c.base_channels = 4;
  c.res_stages = 1;
  c.rdb_growth = 4;
  c.rdb_layers = 2;
  c.toggles = toggles;
  return c;
}

}  // namespace

TEST_SUITE("archive") {
  TEST_CASE("encode and decode round trip") {
    archive::TensorArchive a;
    a.manifest = {{"kind", "test"}, {"n", 3}};
    a.tensors.emplace_back("x", torch::rand({2, 3}));
    a.tensors.emplace_back("y", torch::arange(5, torch::kInt64));
    a.blobs["opaque"] = std::string("\x00\x01\x02zz", 5);
    const auto bytes = archive::encode(a);
    CHECK(bytes.substr(0, 4) == "DCMA");
    auto b = archive::decode(bytes);
    CHECK(b.manifest == a.manifest);
    CHECK(torch::equal(b.tensor("x"), a.tensors[0].second));
    CHECK(torch::equal(b.tensor("y"), a.tensors[1].second));
    CHECK(b.blobs.at("opaque") == a.blobs.at("opaque"));
    CHECK_THROWS(b.tensor("missing"));
    CHECK(archive::encode(b) == bytes);
  }

  TEST_CASE("corruption is detected") {
    archive::TensorArchive a;
    a.tensors.emplace_back("x", torch::rand({16}));
    auto bytes = archive::encode(a);
    CHECK_THROWS_AS(archive::decode(bytes.substr(0, bytes.size() - 1)), IntegrityError);
    CHECK_THROWS_AS(archive::decode("NOPE" + bytes.substr(4)), IntegrityError);
    auto flipped = bytes;
    flipped.back() ^= 0x40;
    CHECK_THROWS_AS(archive::decode(flipped), IntegrityError);
    auto future = bytes;
    future[4] = 2;
    CHECK_THROWS_AS(archive::decode(future), IncompatibleError);
  }

  TEST_CASE("sha256 of known inputs") {
    CHECK(archive::sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(archive::sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }

  TEST_CASE("generator weights round trip bitwise") {
    test::TempDir dir;
    nn::Generator g(small_generator({true, true, true}));
    nn::init_weights(*g);
    const auto path = dir.path() / "g.dcma";
    archive::save_generator(path, g);

    auto loaded = archive::load_generator(path);
    nn::Generator into(small_generator({true, true, true}));
    archive::load_generator(path, into);
    torch::NoGradGuard guard;
    auto x = torch::rand({1, 3, 16, 16});
    CHECK(torch::equal(g(x), loaded(x)));
    CHECK(torch::equal(g(x), into(x)));

    nn::Generator other(small_generator({true, false, true}));
    try {
      archive::load_generator(path, other);
      FAIL("expected IncompatibleError");
    } catch (const IncompatibleError& e) {
      CHECK(std::string(e.what()).find("dfre") != std::string::npos);
    }
  }
}

TEST_SUITE("image") {
  TEST_CASE("image validation") {
    CHECK_THROWS_AS(Image::from_tensor(torch::rand({3, 2, 5})), ShapeError);
    CHECK_THROWS_AS(Image::from_tensor(torch::rand({4, 5, 5})), ShapeError);
    CHECK_THROWS_AS(Image::from_tensor(torch::full({3, 4, 4}, NAN)), ValidationError);
    auto img = Image::filled(4, 6, {0.1, 0.2, 0.3});
    CHECK(img.height() == 4);
    CHECK(img.width() == 6);
    CHECK(img.at(3, 5, 2) == 0.3);
  }

  TEST_CASE("batches round trip") {
    std::vector<Image> imgs{Image::filled(8, 8, {0, 0.5, 1}), Image::filled(8, 8, {1, 0.25, 0})};
    auto batch = to_batch(imgs);
    CHECK(batch.sizes() == torch::IntArrayRef({2, 3, 8, 8}));
    CHECK(batch.dtype() == torch::kFloat32);
    auto back = from_batch(batch);
    REQUIRE(back.size() == 2);
    CHECK(back[1].at(0, 0, 1) == 0.25);
    std::vector<Image> mixed{Image::filled(8, 8, {0, 0, 0}), Image::filled(8, 9, {0, 0, 0})};
    CHECK_THROWS_AS(to_batch(mixed), ShapeError);
  }

  TEST_CASE("png round trip is exact at 8-bit levels") {
    test::TempDir dir;
    auto levels = torch::randint(0, 256, {3, 9, 11}, torch::kFloat64) / 255.0;
    auto img = Image::from_tensor(levels);
    io::write_image(dir.path() / "a" / "b.png", img);
    auto back = io::read_image(dir.path() / "a" / "b.png");
    CHECK((back.tensor() - img.tensor()).abs().max().item<double>() <= 1e-12);
    CHECK_THROWS_AS(io::read_image(dir.path() / "nothing.png"), IoError);
    CHECK(io::has_image_extension("x.PNG"));
    CHECK(io::has_image_extension("x.jpeg"));
    CHECK_FALSE(io::has_image_extension("x.txt"));
  }

  TEST_CASE("depth png keeps 16-bit precision") {
    test::TempDir dir;
    const double scale = 3.0 / 65535.0;
    auto d = haze::DepthField::from_tensor(torch::rand({7, 5}, torch::kFloat64) * 3.0);
    io::write_depth_png(dir.path() / "d.png", d, scale);
    auto back = io::read_depth_png(dir.path() / "d.png", scale);
    CHECK((back.tensor() - d.tensor()).abs().max().item<double>() <= scale / 2 + 1e-12);
  }
}
