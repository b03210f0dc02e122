#include <doctest.h>

#include <cmath>

#include "emomusic/error.hpp"
#include "emomusic/nn/autograd.hpp"
#include "emomusic/nn/checkpoint.hpp"
#include "emomusic/nn/gradcheck.hpp"
#include "emomusic/nn/layers.hpp"
#include "emomusic/nn/optim.hpp"
#include "emomusic/util/random.hpp"

using namespace emomusic;
using namespace emomusic::nn;

namespace {

Tensor random_tensor(Shape shape, util::Rng& rng) {
  return normal_init(std::move(shape), 1.0, rng);
}

}  // namespace

TEST_SUITE("nn") {
  TEST_CASE("matmul and transpose by hand") {
    const auto a = Tensor::matrix(2, 2, {1, 2, 3, 4});
    const auto b = Tensor::matrix(2, 1, {5, 6});
    CHECK(matmul(a, b) == Tensor::matrix(2, 1, {17, 39}));
    CHECK(transpose(a) == Tensor::matrix(2, 2, {1, 3, 2, 4}));
    CHECK_THROWS_AS(matmul(a, Tensor::matrix(1, 2, {1, 1})), Error);
  }

  TEST_CASE("softmax by hand and shift invariance") {
    const auto s = softmax(Tensor::row({0.0, std::log(3.0)}));
    CHECK(s[0] == doctest::Approx(0.25).epsilon(1e-15));
    CHECK(s[1] == doctest::Approx(0.75).epsilon(1e-15));
    util::Rng rng(1);
    const auto x = random_tensor({3, 7}, rng);
    Tensor y = x;
    for (auto& v : y.values()) v += 1000.0;
    CHECK(max_abs_diff(softmax(x), softmax(y)) < 1e-12);
    const auto p = softmax(x);
    for (std::size_t r = 0; r < 3; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 7; ++c) total += p.at(r, c);
      CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
    }
  }

  TEST_CASE("masked softmax zeroes disallowed entries") {
    const Var x = Var::constant(Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
    const auto mask = causal_mask(3);
    const Tensor allowed = Tensor::matrix(2, 3, {1, 0, 0, 0, 0, 0});
    const auto p = softmax_rows(x, &allowed).value();
    CHECK(p.at(0, 0) == 1.0);
    CHECK(p.at(0, 1) == 0.0);
    CHECK(p.at(1, 2) == 0.0);
    CHECK(mask.at(0, 1) == 0.0);
    CHECK(mask.at(2, 0) == 1.0);
  }

  TEST_CASE("layer norm and batch norm statistics") {
    util::Rng rng(2);
    const auto x = random_tensor({5, 8}, rng);
    const auto y = layer_norm(x, Tensor({1, 8}, 1.0), Tensor({1, 8}, 0.0), 1e-5);
    for (std::size_t r = 0; r < 5; ++r) {
      double m = 0, v = 0;
      for (std::size_t c = 0; c < 8; ++c) m += y.at(r, c) / 8;
      for (std::size_t c = 0; c < 8; ++c) v += (y.at(r, c) - m) * (y.at(r, c) - m) / 8;
      CHECK(std::abs(m) < 1e-12);
      CHECK(v == doctest::Approx(1.0).epsilon(1e-4));
    }
    BatchNorm1d bn("bn", 8);
    const auto z = bn.forward(Var::constant(x), NormMode::Train).value();
    for (std::size_t c = 0; c < 8; ++c) {
      double m = 0;
      for (std::size_t r = 0; r < 5; ++r) m += z.at(r, c) / 5;
      CHECK(std::abs(m) < 1e-12);
    }
    CHECK(bn.stats.mean.at(0, 0) != 0.0);  // running stats moved
    const auto e1 = bn.forward(Var::constant(x), NormMode::Eval).value();
    const auto e2 = bn.forward(Var::constant(x), NormMode::Eval).value();
    CHECK(e1 == e2);
    try {
      bn.forward(Var::constant(Tensor({1, 8}, 1.0)), NormMode::Train);
      FAIL("expected BatchTooSmall");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::BatchTooSmall);
    }
  }

  TEST_CASE("one Adam step moves each weight by lr against the gradient sign") {
    Parameter p("w", Tensor::row({1.0, -2.0, 0.5}));
    const Var loss = sum(mul(p.var(), Var::constant(Tensor::row({3.0, -0.25, 0.0}))));
    loss.backward();
    adam_step(p, {.lr = 0.01});
    CHECK(p.value()[0] == doctest::Approx(0.99).epsilon(1e-9));
    CHECK(p.value()[1] == doctest::Approx(-1.99).epsilon(1e-9));
    CHECK(p.value()[2] == 0.5);
    CHECK(p.step_count == 1);
  }

  TEST_CASE("causal attention ignores the future") {
    util::Rng rng(3);
    const MultiHeadAttention att("att", {16, 4}, rng);
    auto x = random_tensor({6, 16}, rng);
    const auto mask = causal_mask(6);
    const auto before = att.forward(Var::constant(x), Var::constant(x), Var::constant(x), &mask).value();
    for (std::size_t c = 0; c < 16; ++c) x.at(5, c) += 3.0;
    const auto after = att.forward(Var::constant(x), Var::constant(x), Var::constant(x), &mask).value();
    for (std::size_t r = 0; r < 5; ++r)
      for (std::size_t c = 0; c < 16; ++c) CHECK(before.at(r, c) == after.at(r, c));
    CHECK(before.at(5, 0) != after.at(5, 0));
  }

  TEST_CASE("block gradients agree with finite differences") {
    util::Rng rng(4);
    TransformerBlock block("blk", {8, 2}, 16, rng);
    ParameterList list;
    block.collect(list);
    const auto x = Var::leaf(random_tensor({4, 8}, rng));
    const auto mask = causal_mask(4);
    const Tensor w = random_tensor({4, 8}, rng);
    auto loss = [&] { return sum(mul(block.forward(x, &mask), Var::constant(w))); };
    std::vector<GradcheckBlock> blocks;
    for (auto* p : list.params) blocks.push_back({p->name(), p->var()});
    blocks.push_back({"x", x});
    const auto report = gradcheck(loss, blocks);
    CHECK_MESSAGE(report.passed(), report.to_string());
  }

  TEST_CASE("checkpoint round trip and corruption") {
    util::Rng rng(5);
    Linear lin("lin", 3, 2, rng);
    ParameterList list;
    lin.collect(list);
    Checkpoint ck;
    ck.config = {{"k", 1}};
    ck.blocks = export_state(list);
    const auto bytes = serialize_checkpoint(ck);
    const auto back = deserialize_checkpoint(bytes);
    CHECK(back.config == ck.config);
    REQUIRE(back.find("lin.weight") != nullptr);
    CHECK(back.find("lin.weight")->tensor == lin.weight.value());

    Linear other("lin", 3, 2, rng);
    ParameterList other_list;
    other.collect(other_list);
    import_state(other_list, back.blocks);
    CHECK(other.weight.value() == lin.weight.value());

    auto flipped = bytes;
    flipped[flipped.size() / 2] ^= 0x01;
    auto code = [](std::span<const std::uint8_t> b) {
      try {
        deserialize_checkpoint(b);
      } catch (const Error& e) {
        return e.code();
      }
      return ErrorCode::IoError;
    };
    CHECK(code(flipped) == ErrorCode::CheckpointCorrupt);
    CHECK(code(std::span(bytes).first(bytes.size() - 3)) == ErrorCode::CheckpointCorrupt);
    CHECK(code(std::span(bytes).first(4)) == ErrorCode::CheckpointCorrupt);

    Linear wide("lin", 4, 2, rng);
    ParameterList wide_list;
    wide.collect(wide_list);
    CHECK_THROWS_AS(import_state(wide_list, back.blocks), Error);
  }
}
