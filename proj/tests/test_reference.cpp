#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sqn/reference.hpp"

using namespace sqn;

namespace {

std::mt19937 rng(21);

FmapF random_fmap(int w, int h, int c, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  FmapF m(w, h, c);
  for (auto& v : m.data()) v = dist(rng);
  return m;
}

FloatLayerParams random_params(int out_ch, int in_ch, int k, int stride, int pad) {
  std::uniform_real_distribution<float> dist(-0.5f, 0.5f);
  FloatLayerParams p;
  p.out_ch = out_ch;
  p.in_ch = in_ch;
  p.kh = p.kw = k;
  p.stride = stride;
  p.pad = pad;
  p.weights.resize(static_cast<std::size_t>(out_ch) * in_ch * k * k);
  p.bias.resize(out_ch);
  for (auto& v : p.weights) v = dist(rng);
  for (auto& v : p.bias) v = dist(rng);
  return p;
}

// Direct six-nested-loop convolution, double accumulators, written without
// reference to the library implementation.
FmapF oracle_conv(const FmapF& in, const FloatLayerParams& p, bool relu) {
  const int oh = (in.height() + 2 * p.pad - p.kh) / p.stride + 1;
  const int ow = (in.width() + 2 * p.pad - p.kw) / p.stride + 1;
  FmapF out(ow, oh, p.out_ch);
  for (int o = 0; o < p.out_ch; ++o)
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        double sum = p.bias[o];
        for (int c = 0; c < p.in_ch; ++c)
          for (int ky = 0; ky < p.kh; ++ky)
            for (int kx = 0; kx < p.kw; ++kx) {
              const int iy = y * p.stride + ky - p.pad;
              const int ix = x * p.stride + kx - p.pad;
              if (iy < 0 || iy >= in.height() || ix < 0 || ix >= in.width()) continue;
              sum += static_cast<double>(p.weights[p.windex(o, ky, kx, c)]) * in.at(ix, iy, c);
            }
        if (relu && sum < 0) sum = 0;
        out.at(x, y, o) = static_cast<float>(sum);
      }
  return out;
}

void check_close(const FmapF& got, const FmapF& want, double rel) {
  REQUIRE(got.width() == want.width());
  REQUIRE(got.height() == want.height());
  REQUIRE(got.channels() == want.channels());
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double g = got.data()[i], w = want.data()[i];
    CHECK(std::fabs(g - w) <= rel * std::max(1.0, std::fabs(w)));
  }
}

}  // namespace

TEST_CASE("conv2d_ref: identity 1x1 kernel returns the input") {
  FmapF in = random_fmap(4, 5, 6);
  FloatLayerParams p;
  p.out_ch = p.in_ch = 6;
  p.kh = p.kw = 1;
  p.weights.assign(36, 0.0f);
  p.bias.assign(6, 0.0f);
  for (int o = 0; o < 6; ++o) p.weights[p.windex(o, 0, 0, o)] = 1.0f;
  FmapF out = conv2d_ref(in, p, false);
  REQUIRE(out.size() == in.size());
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(out.data()[i] == in.data()[i]);
}

TEST_CASE("conv2d_ref: zero input with bias and relu") {
  FmapF in(3, 3, 4);
  FloatLayerParams p = random_params(5, 4, 3, 1, 1);
  FmapF out = conv2d_ref(in, p, true);
  for (int y = 0; y < out.height(); ++y)
    for (int x = 0; x < out.width(); ++x)
      for (int o = 0; o < 5; ++o)
        CHECK(out.at(x, y, o) == std::max(p.bias[o], 0.0f));
}

TEST_CASE("conv2d_ref: random layers match the loop oracle") {
  for (int trial = 0; trial < 20; ++trial) {
    FmapF in = random_fmap(5, 5, 16);
    FloatLayerParams p = random_params(8, 16, 3, 1, 1);
    check_close(conv2d_ref(in, p, trial % 2 == 0), oracle_conv(in, p, trial % 2 == 0), 1e-5);
  }
  // strided, unpadded (first-layer shape)
  FmapF in = random_fmap(9, 9, 3);
  FloatLayerParams p = random_params(4, 3, 3, 2, 0);
  check_close(conv2d_ref(in, p, true), oracle_conv(in, p, true), 1e-5);
}

TEST_CASE("conv2d_ref: linear in the input when bias is zero and relu off") {
  FmapF in = random_fmap(4, 4, 8);
  FloatLayerParams p = random_params(4, 8, 3, 1, 1);
  p.bias.assign(p.bias.size(), 0.0f);
  FmapF scaled_in = in;
  for (auto& v : scaled_in.data()) v *= 3.0f;
  FmapF a = conv2d_ref(in, p, false);
  FmapF b = conv2d_ref(scaled_in, p, false);
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(std::fabs(3.0f * a.data()[i] - b.data()[i]) <=
          1e-5 * std::max(1.0f, std::fabs(b.data()[i])));
}

TEST_CASE("conv2d_ref: dimension mismatch rejected") {
  FmapF in(4, 4, 5);
  FloatLayerParams p = random_params(2, 4, 3, 1, 1);
  CHECK_THROWS_AS(conv2d_ref(in, p, false), std::invalid_argument);
}

TEST_CASE("maxpool_ref: constants, global max and oracle") {
  FmapF c(6, 6, 3);
  for (auto& v : c.data()) v = 2.5f;
  FmapF pc = maxpool_ref(c, 3, 2);
  CHECK(pc.width() == 2);
  for (auto v : pc.data()) CHECK(v == 2.5f);

  FmapF nine = FmapF::wrap(3, 3, 1, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  FmapF g = maxpool_ref(nine, 3, 2);
  CHECK(g.width() == 1);
  CHECK(g.height() == 1);
  CHECK(g.at(0, 0, 0) == 9.0f);

  // brute-force window scan
  FmapF r = random_fmap(7, 9, 4, -3.0f, 3.0f);
  FmapF p = maxpool_ref(r, 3, 2);
  CHECK(p.width() == (7 - 3) / 2 + 1);
  CHECK(p.height() == (9 - 3) / 2 + 1);
  for (int y = 0; y < p.height(); ++y)
    for (int x = 0; x < p.width(); ++x)
      for (int c2 = 0; c2 < 4; ++c2) {
        float best = -1e30f;
        for (int ky = 0; ky < 3; ++ky)
          for (int kx = 0; kx < 3; ++kx)
            best = std::max(best, r.at(x * 2 + kx, y * 2 + ky, c2));
        CHECK(p.at(x, y, c2) == best);
      }

  CHECK_THROWS_AS(maxpool_ref(FmapF(2, 2, 1), 3, 2), std::invalid_argument);
}

TEST_CASE("avgpool_global_ref: small means and oracle") {
  FmapF m = FmapF::wrap(2, 2, 1, {1, 2, 3, 4});
  CHECK(avgpool_global_ref(m).at(0, 0, 0) == doctest::Approx(2.5).epsilon(1e-7));

  FmapF c(5, 4, 2);
  for (auto& v : c.data()) v = -0.75f;
  FmapF pc = avgpool_global_ref(c);
  CHECK(pc.at(0, 0, 0) == doctest::Approx(-0.75).epsilon(1e-7));

  FmapF r = random_fmap(13, 13, 8, -2.0f, 2.0f);
  FmapF p = avgpool_global_ref(r);
  for (int ch = 0; ch < 8; ++ch) {
    long double sum = 0;
    for (int y = 0; y < 13; ++y)
      for (int x = 0; x < 13; ++x) sum += r.at(x, y, ch);
    const double want = static_cast<double>(sum / (13.0L * 13.0L));
    CHECK(std::fabs(p.at(0, 0, ch) - want) <= 1e-6 * std::max(1.0, std::fabs(want)));
  }
}

TEST_CASE("softmax_ref: uniform, closed form, high-precision oracle") {
  std::vector<double> equal(1000, 3.7);
  auto pu = softmax_ref(equal);
  for (double v : pu) CHECK(v == doctest::Approx(0.001).epsilon(1e-9));

  std::vector<double> two{0.0, std::log(3.0)};
  auto pt = softmax_ref(two);
  CHECK(pt[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(pt[1] == doctest::Approx(0.75).epsilon(1e-12));

  std::uniform_real_distribution<double> dist(-20.0, 20.0);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> logits(64);
    for (auto& v : logits) v = dist(rng);
    auto probs = softmax_ref(logits);

    // long-double oracle
    long double top = logits[0];
    for (double v : logits) top = std::max<long double>(top, v);
    long double denom = 0;
    std::vector<long double> e(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      e[i] = expl(static_cast<long double>(logits[i]) - top);
      denom += e[i];
    }
    double sum = 0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
      CHECK(std::fabs(probs[i] - static_cast<double>(e[i] / denom)) <= 1e-9);
      CHECK(probs[i] > 0.0);
      sum += probs[i];
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-6);

    // order preserving
    for (std::size_t i = 1; i < logits.size(); ++i)
      CHECK((logits[i] < logits[i - 1]) == (probs[i] < probs[i - 1]));
  }
}

TEST_CASE("fire_ref: identity/zero composition and channel count") {
  const int ch = 5;
  FmapF in = random_fmap(4, 4, ch, 0.0f, 1.0f);  // non-negative so relu is a no-op

  FloatLayerParams sq;
  sq.out_ch = sq.in_ch = ch;
  sq.kh = sq.kw = 1;
  sq.weights.assign(ch * ch, 0.0f);
  sq.bias.assign(ch, 0.0f);
  for (int o = 0; o < ch; ++o) sq.weights[sq.windex(o, 0, 0, o)] = 1.0f;

  FloatLayerParams e1 = sq;  // identity as well
  FloatLayerParams e3;
  e3.out_ch = 3;
  e3.in_ch = ch;
  e3.kh = e3.kw = 3;
  e3.pad = 1;
  e3.weights.assign(3 * ch * 9, 0.0f);
  e3.bias.assign(3, 0.0f);

  FmapF out = fire_ref(in, sq, e1, e3);
  CHECK(out.channels() == ch + 3);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      for (int c = 0; c < ch; ++c) CHECK(out.at(x, y, c) == in.at(x, y, c));
      for (int c = ch; c < ch + 3; ++c) CHECK(out.at(x, y, c) == 0.0f);
    }
}

TEST_CASE("fire_ref: equals the explicit three-convolution composition") {
  FmapF in = random_fmap(5, 6, 8);
  FloatLayerParams sq = random_params(4, 8, 1, 1, 0);
  FloatLayerParams e1 = random_params(6, 4, 1, 1, 0);
  FloatLayerParams e3 = random_params(7, 4, 3, 1, 1);

  FmapF fired = fire_ref(in, sq, e1, e3);
  CHECK(fired.channels() == 13);

  FmapF s = conv2d_ref(in, sq, true);
  FmapF a = conv2d_ref(s, e1, true);
  FmapF b = conv2d_ref(s, e3, true);
  for (int y = 0; y < fired.height(); ++y)
    for (int x = 0; x < fired.width(); ++x) {
      for (int c = 0; c < 6; ++c) CHECK(fired.at(x, y, c) == a.at(x, y, c));
      for (int c = 0; c < 7; ++c) CHECK(fired.at(x, y, 6 + c) == b.at(x, y, c));
    }
}

TEST_CASE("fire_ref: mismatched dims rejected") {
  FmapF in = random_fmap(4, 4, 8);
  FloatLayerParams sq = random_params(4, 8, 1, 1, 0);
  FloatLayerParams e1 = random_params(6, 5, 1, 1, 0);  // wrong input channels
  FloatLayerParams e3 = random_params(7, 4, 3, 1, 1);
  CHECK_THROWS_AS(fire_ref(in, sq, e1, e3), std::invalid_argument);
}
