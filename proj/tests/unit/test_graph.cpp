#include <doctest.h>

#include <cmath>

#include <algorithm>

#include "../support.hpp"
#include "splitwire/engine.hpp"
#include "splitwire/errors.hpp"
#include "splitwire/model_file.hpp"

using namespace splitwire;
using namespace testing_support;

TEST_CASE("MicroResNet topology and valid splits") {
  const auto model = build_microresnet(42);
  CHECK(model.size() == 31);
  CHECK(model.input_shape() == Shape{3, 32, 32});
  CHECK(model.output_shape() == Shape{kNumClasses});
  CHECK(model.valid_splits() == kMicroResNetSplits);
  int post_add = 0;
  for (auto k : model.valid_splits())
    if (model.layer(k).kind == LayerKind::Add) ++post_add;
  CHECK(post_add >= 3);
  CHECK(model.layer(model.last()).kind == LayerKind::Softmax);
  CHECK(model.output_shape(9) == Shape{8, 32, 32});
  CHECK(model.output_shape(18) == Shape{16, 16, 16});
  CHECK(model.output_shape(27) == Shape{32, 8, 8});
}

TEST_CASE("build_microresnet is deterministic and seed-sensitive") {
  const auto a = build_microresnet(42), b = build_microresnet(42);
  CHECK(save_model(a) == save_model(b));
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() == kSeed42Hash);
  std::vector<std::uint64_t> hashes;
  for (std::uint64_t s = 0; s < 16; ++s) hashes.push_back(build_microresnet(s).hash());
  std::sort(hashes.begin(), hashes.end());
  CHECK(std::adjacent_find(hashes.begin(), hashes.end()) == hashes.end());
}

TEST_CASE("Glorot-uniform weights stay inside their bound") {
  const auto model = build_microresnet(7);
  for (const auto& layer : model.layers()) {
    if (const auto* p = std::get_if<Conv2DParams>(&layer.params)) {
      const double fan_in = double(p->in_channels) * p->kernel_h * p->kernel_w;
      const double fan_out = double(p->out_channels) * p->kernel_h * p->kernel_w;
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      for (float w : p->weights) CHECK(std::abs(w) <= bound);
    }
    if (const auto* bn = std::get_if<BatchNormParams>(&layer.params)) {
      for (std::uint32_t c = 0; c < bn->channels; ++c) {
        CHECK(bn->gamma[c] == 1.0f);
        CHECK(bn->beta[c] == 0.0f);
        CHECK(bn->mean[c] == 0.0f);
        CHECK(bn->variance[c] == 1.0f);
      }
    }
  }
  CHECK(batchnorm_uncalibrated(model));
}

TEST_CASE("split_by_name lists valid names on failure") {
  const auto& model = seed42();
  CHECK(model.split_by_name("block2_relu") == 18);
  try {
    (void)model.split_by_name("bogus");
    FAIL("expected InvalidSplitError");
  } catch (const InvalidSplitError& e) {
    const std::string msg = e.what();
    for (const auto& name : model.valid_split_names()) CHECK(msg.find(name) != std::string::npos);
  }
  CHECK_THROWS_AS(model.split_by_name("block1_conv1"), InvalidSplitError);
}

TEST_CASE("graph validation rejects malformed layer lists") {
  SplitMix64 rng(1);
  SUBCASE("forward reference") {
    CHECK_THROWS(ModelGraph({4}, {simple_layer(0, "a", LayerKind::ReLU, {1}), simple_layer(1, "b", LayerKind::ReLU, {0})}));
  }
  SUBCASE("Add with one input") {
    CHECK_THROWS(ModelGraph({4}, {simple_layer(0, "a", LayerKind::ReLU, {kModelInput}),
                                  simple_layer(1, "b", LayerKind::Add, {0})}));
  }
  SUBCASE("Add with mismatched shapes") {
    CHECK_THROWS(ModelGraph({4}, {dense_layer(0, "a", 4, 3, rng, kModelInput), dense_layer(1, "b", 3, 2, rng, 0),
                                  simple_layer(2, "c", LayerKind::Add, {0, 1})}));
  }
  SUBCASE("duplicate names") {
    CHECK_THROWS(ModelGraph({4}, {simple_layer(0, "a", LayerKind::ReLU, {kModelInput}),
                                  simple_layer(1, "a", LayerKind::ReLU, {0})}));
  }
  SUBCASE("two terminal layers") {
    CHECK_THROWS(ModelGraph({4}, {simple_layer(0, "a", LayerKind::ReLU, {kModelInput}),
                                  simple_layer(1, "b", LayerKind::ReLU, {0}), simple_layer(2, "c", LayerKind::ReLU, {0})}));
  }
  SUBCASE("conv weight count") {
    Conv2DParams p{1, 1, 3, 3, 1, 1, std::vector<float>(8), {0.0f}};
    CHECK_THROWS(ModelGraph({1, 4, 4}, {Layer{0, "c", LayerKind::Conv2D, p, {kModelInput}}}));
  }
  SUBCASE("model input used by a later layer") {
    CHECK_THROWS(ModelGraph({4}, {simple_layer(0, "a", LayerKind::ReLU, {kModelInput}),
                                  simple_layer(1, "b", LayerKind::ReLU, {kModelInput})}));
  }
}

TEST_CASE("CIMF round trip is bit-exact") {
  const auto& model = seed42();
  const Bytes bytes = save_model(model);
  const ModelGraph loaded = load_model(bytes);
  CHECK(loaded == model);
  CHECK(loaded.hash() == model.hash());
  CHECK(save_model(loaded) == bytes);
  CHECK(bytes[0] == 'C');
  CHECK(bytes[1] == 'I');
  CHECK(bytes[2] == 'M');
  CHECK(bytes[3] == 'F');
  CHECK(bytes[4] == kModelFormatVersion);
}

TEST_CASE("CIMF corruption is detected") {
  const Bytes good = save_model(build_microresnet(3));
  auto kind_of = [](const Bytes& b) {
    try {
      (void)load_model(b);
    } catch (const FormatError& e) {
      return e.kind();
    }
    FAIL("expected FormatError");
    return FormatError::Kind::Malformed;
  };
  SUBCASE("flipped weight byte") {
    Bytes b = good;
    b[b.size() - 100] ^= 0x01;
    CHECK(kind_of(b) == FormatError::Kind::HashMismatch);
  }
  SUBCASE("flipped hash byte") {
    Bytes b = good;
    b.back() ^= 0x80;
    CHECK(kind_of(b) == FormatError::Kind::HashMismatch);
  }
  SUBCASE("bad magic") {
    Bytes b = good;
    b[0] = 'X';
    CHECK(kind_of(b) == FormatError::Kind::BadMagic);
  }
  SUBCASE("version mismatch") {
    Bytes b = good;
    b[4] = 2;
    CHECK(kind_of(b) == FormatError::Kind::VersionMismatch);
  }
  SUBCASE("every truncation is an error, never a crash") {
    for (std::size_t n = 0; n < good.size(); n += (n < 200 ? 1 : 997)) {
      Bytes b(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(n));
      CHECK_THROWS_AS(load_model(b), FormatError);
    }
    Bytes b(good.begin(), good.end() - 1);
    CHECK(kind_of(b) == FormatError::Kind::Truncated);
  }
  SUBCASE("trailing garbage") {
    Bytes b = good;
    b.push_back(0);
    CHECK_THROWS_AS(load_model(b), FormatError);
  }
}
