#include <doctest.h>

#include <cmath>

#include "iganet/gradcheck.hpp"
#include "iganet/layers.hpp"
#include "oracles.hpp"

using namespace iganet;

namespace {

Tensor rand_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.mutable_values()) v = rng.uniform(lo, hi);
  return t;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

void zero_all(Tensor& t) {
  for (double& v : t.mutable_values()) v = 0.0;
}

IgaBlockParams zeroed_block(int c, int heads) {
  Rng rng(1);
  IgaBlockParams p = make_iga_params(c, heads, 0.0, 0.0, rng);
  zero_all(p.norm_in.gamma);
  zero_all(p.gcn1.weight);
  zero_all(p.gcn2.weight);
  zero_all(p.attn.wq);
  zero_all(p.attn.wk);
  zero_all(p.attn.wv);
  zero_all(p.attn.wo);
  return p;
}

}  // namespace

TEST_CASE("gcn with no edges and identity weights is the identity") {
  SkeletonGraph isolated = make_graph("iso", 4, {}, {}, 0);
  GcnLayerParams p;
  p.weight = Tensor({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  p.bias = Tensor::zeros({3});
  Rng rng(2);
  Tensor x = rand_tensor({4, 3}, rng);
  Tensor out = gcn_forward(x, p, isolated, false);
  CHECK(out.values() == x.values());
}

TEST_CASE("gcn on a single-joint graph is a plain linear layer") {
  SkeletonGraph single = make_graph("one", 1, {}, {}, 0);
  Rng rng(3);
  GcnLayerParams p = make_gcn_params(5, 4, rng);
  Tensor x = rand_tensor({1, 5}, rng);
  Tensor expect = gelu(linear(x, p.weight, p.bias));
  Tensor out = gcn_forward(x, p, single, true);
  CHECK(max_abs_diff(out.values(), expect.values()) == 0.0);
}

TEST_CASE("gcn matches the naive neighbor-aggregation oracle") {
  SkeletonGraph g = build_h36m_17();
  Rng rng(4);
  GcnLayerParams p = make_gcn_params(8, 8, rng);
  Tensor x = rand_tensor({17, 8}, rng);
  std::vector<double> expect = oracle::gcn(x.values(), 8, g, p.weight.values(), 8,
                                           p.bias.values(), true);
  Tensor out = gcn_forward(x, p, g, true);
  CHECK(max_abs_diff(out.values(), expect) < 1e-12);
}

TEST_CASE("gcn rejects mismatched dimensions") {
  SkeletonGraph g = build_h36m_17();
  Rng rng(5);
  GcnLayerParams p = make_gcn_params(8, 8, rng);
  CHECK_THROWS_AS(gcn_forward(Tensor({16, 8}), p, g, true), std::invalid_argument);
  CHECK_THROWS_AS(gcn_forward(Tensor({17, 9}), p, g, true), std::invalid_argument);
}

TEST_CASE("attention_g2a with zero scale reduces to plain attention") {
  Rng rng(6);
  AttentionParams p = make_attention_params(16, 16, 4, rng);
  Tensor x = rand_tensor({17, 16}, rng);
  Tensor f = rand_tensor({17, 16}, rng);
  Tensor plain = multihead_attention(x, p);
  Tensor injected = attention_g2a(x, f, p, Tensor::scalar(0.0));
  CHECK(max_abs_diff(plain.values(), injected.values()) <= 1e-15);
}

TEST_CASE("single-token attention returns the value row plus the scaled graph term") {
  Rng rng(7);
  AttentionParams p = make_attention_params(6, 6, 2, rng);
  Tensor x = rand_tensor({1, 6}, rng);
  Tensor f = rand_tensor({1, 6}, rng);
  Tensor out = attention_g2a(x, f, p, Tensor::scalar(0.5));
  Tensor expect = add(matmul(x, p.wv), scale(f, 0.5));  // softmax of a 1x1 slice is 1
  CHECK(max_abs_diff(out.values(), expect.values()) < 1e-15);
}

TEST_CASE("single-head attention matches the straight-line oracle") {
  Rng rng(8);
  AttentionParams p = make_attention_params(12, 12, 1, rng);
  Tensor x = rand_tensor({17, 12}, rng);
  Tensor f = rand_tensor({17, 12}, rng);
  std::vector<double> expect = oracle::attention_g2a_single_head(
      x.values(), f.values(), 17, 12, p.wq.values(), p.wk.values(), p.wv.values(), 0.5);
  Tensor out = attention_g2a(x, f, p, Tensor::scalar(0.5));
  CHECK(max_abs_diff(out.values(), expect) < 1e-12);
}

TEST_CASE("multi-head attention matches the slicing oracle") {
  Rng rng(9);
  AttentionParams p = make_attention_params(16, 16, 4, rng);
  Tensor x = rand_tensor({17, 16}, rng);
  std::vector<double> expect =
      oracle::mha(x.values(), 17, 16, p.wq.values(), p.wk.values(), p.wv.values(), 4);
  Tensor out = multihead_attention(x, p);
  CHECK(max_abs_diff(out.values(), expect) < 1e-12);
}

TEST_CASE("attention_g2a rejects mismatched graph features") {
  Rng rng(10);
  AttentionParams p = make_attention_params(8, 8, 2, rng);
  Tensor x = rand_tensor({17, 8}, rng);
  Tensor bad = rand_tensor({17, 4}, rng);
  CHECK_THROWS_AS(attention_g2a(x, bad, p, Tensor::scalar(0.5)), std::invalid_argument);
}

TEST_CASE("a2g_inject hand cases") {
  Rng rng(11);
  Tensor g1 = rand_tensor({5, 4}, rng);
  Tensor f = rand_tensor({5, 4}, rng);

  Tensor zero_s = a2g_inject(g1, f, Tensor::scalar(0.0));
  CHECK(zero_s.values() == g1.values());

  Tensor zero_f = a2g_inject(g1, Tensor::zeros({5, 4}), Tensor::scalar(0.8));
  CHECK(zero_f.values() == g1.values());

  Tensor ones = Tensor::full({5, 4}, 1.0);
  Tensor mixed = a2g_inject(ones, ones, Tensor::scalar(0.8));
  for (double v : mixed.values()) CHECK(v == doctest::Approx(1.8).epsilon(1e-15));

  CHECK_THROWS_AS(a2g_inject(g1, Tensor({4, 4}), Tensor::scalar(0.8)), std::invalid_argument);
}

TEST_CASE("zeroed block is the identity through the outer residual") {
  SkeletonGraph g = build_h36m_17();
  IgaBlockParams p = zeroed_block(16, 4);
  Rng rng(12);
  Tensor x = rand_tensor({17, 16}, rng);
  Tensor out = iga_forward(x, p, g);
  CHECK(max_abs_diff(out.values(), x.values()) == 0.0);
}

TEST_CASE("block with zero scales equals the decoupled parallel baseline") {
  SkeletonGraph g = build_h36m_17();
  Rng rng(13);
  IgaBlockParams p = make_iga_params(16, 4, 0.0, 0.0, rng);
  Tensor x = rand_tensor({17, 16}, rng);
  Tensor out = iga_forward(x, p, g);
  std::vector<double> expect = oracle::parallel_block(x.values(), 17, 16, p, g);
  CHECK(max_abs_diff(out.values(), expect) < 1e-12);
}

TEST_CASE("block gradients flow into the injection scales") {
  SkeletonGraph g = build_h36m_17();
  Rng rng(14);
  IgaBlockParams p = make_iga_params(16, 4, 0.5, 0.8, rng);
  Tensor x = rand_tensor({17, 16}, rng);
  GradCheckConfig cfg;
  cfg.eps = 1e-5;
  cfg.max_coords_per_tensor = 0;
  auto res = check_gradients(
      "iga_scales", {p.s_g2a, p.s_a2g},
      [&](Tape&, std::vector<Tensor>& params) {
        IgaBlockParams live = p;
        live.s_g2a = params[0];
        live.s_a2g = params[1];
        return sum_all(iga_forward(x, live, g));
      },
      cfg);
  CHECK(res.max_rel_err < 1e-5);
}

TEST_CASE("umlp residual structure") {
  Rng rng(15);
  const int C = 16, Cb = 8;

  SUBCASE("all-zero umlp is the identity") {
    UmlpParams p = make_umlp_params(C, Cb, rng);
    zero_all(p.norm.gamma);
    zero_all(p.down.weight);
    zero_all(p.mid.weight);
    zero_all(p.up.weight);
    Tensor x = rand_tensor({17, C}, rng);
    CHECK(umlp_forward(x, p).values() == x.values());
  }

  SUBCASE("zero up path passes the input through exactly") {
    UmlpParams p = make_umlp_params(C, Cb, rng);
    zero_all(p.up.weight);
    zero_all(p.up.bias);
    Tensor x = rand_tensor({17, C}, rng);
    CHECK(umlp_forward(x, p).values() == x.values());
  }

  SUBCASE("zero mid weights make the inner shortcut exact") {
    UmlpParams p = make_umlp_params(C, Cb, rng);
    zero_all(p.mid.weight);
    zero_all(p.mid.bias);
    Tensor x = rand_tensor({17, C}, rng);
    // with the mid layer zeroed, X_mid == X_down, so the whole module is
    // up(down-path) + x
    Tensor xn = layer_norm(x, p.norm.gamma, p.norm.beta);
    Tensor down = gelu(linear(xn, p.down.weight, p.down.bias));
    Tensor expect = add(linear(down, p.up.weight, p.up.bias), x);
    CHECK(umlp_forward(x, p).values() == expect.values());
  }
}

TEST_CASE("umlp matches the straight-line oracle") {
  Rng rng(16);
  UmlpParams p = make_umlp_params(16, 8, rng);
  Tensor x = rand_tensor({17, 16}, rng);
  std::vector<double> expect = oracle::umlp(x.values(), 17, 16, 8, p);
  CHECK(max_abs_diff(umlp_forward(x, p).values(), expect) < 1e-12);
}

TEST_CASE("umlp rejects an inverted bottleneck") {
  Rng rng(17);
  CHECK_THROWS_AS(make_umlp_params(8, 8, rng), std::invalid_argument);
  CHECK_THROWS_AS(make_umlp_params(8, 16, rng), std::invalid_argument);
}

TEST_CASE("patch_embed basics") {
  SUBCASE("all-zero parameters give zero features") {
    Tensor p2d({3, 2}, {1, 2, 3, 4, 5, 6});
    Tensor out = patch_embed(p2d, Tensor::zeros({2, 4}), Tensor::zeros({3, 4}));
    for (double v : out.values()) CHECK(v == 0.0);
  }
  SUBCASE("a basis-vector joint selects the matching embedding row") {
    Tensor p2d({1, 2}, {1, 0});
    Tensor we({2, 3}, {1, 2, 3, 4, 5, 6});
    Tensor out = patch_embed(p2d, we, Tensor::zeros({1, 3}));
    CHECK(out.values() == std::vector<double>{1, 2, 3});
  }
  SUBCASE("positional rows separate joints with identical coordinates") {
    Rng rng(18);
    Tensor p2d({2, 2}, {0.3, 0.4, 0.3, 0.4});
    Tensor we = rand_tensor({2, 5}, rng);

    Tensor same_pos = patch_embed(p2d, we, Tensor::zeros({2, 5}));
    for (int c = 0; c < 5; ++c) CHECK(same_pos.at({0, c}) == same_pos.at({1, c}));

    Tensor pos = rand_tensor({2, 5}, rng);
    Tensor distinct = patch_embed(p2d, we, pos);
    bool differs = false;
    for (int c = 0; c < 5; ++c) differs = differs || distinct.at({0, c}) != distinct.at({1, c});
    CHECK(differs);
  }
}

TEST_CASE("regress_head basics and gradient") {
  Rng rng(19);
  SUBCASE("zero weights broadcast the bias") {
    Tensor x = rand_tensor({5, 8}, rng);
    Tensor b({3}, {1, 2, 3});
    Tensor y = regress_head(x, Tensor::zeros({8, 3}), b);
    for (int j = 0; j < 5; ++j)
      for (int c = 0; c < 3; ++c) CHECK(y.at({j, c}) == b.values()[static_cast<std::size_t>(c)]);
  }
  SUBCASE("identity weights pass features through") {
    Tensor x = rand_tensor({4, 3}, rng);
    Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
    Tensor y = regress_head(x, eye, Tensor::zeros({3}));
    CHECK(y.values() == x.values());
  }
  SUBCASE("gradient check") {
    Tensor x = rand_tensor({4, 6}, rng);
    Tensor w = rand_tensor({6, 3}, rng);
    Tensor b = rand_tensor({3}, rng);
    GradCheckConfig cfg;
    cfg.eps = 1e-5;
    cfg.max_coords_per_tensor = 0;
    auto res = check_gradients(
        "regress_head", {x, w, b},
        [](Tape&, std::vector<Tensor>& p) { return sum_all(regress_head(p[0], p[1], p[2])); },
        cfg);
    CHECK(res.max_rel_err < 1e-5);
  }
}

TEST_CASE("every layer op passes the finite-difference suite") {
  GradCheckConfig cfg;
  cfg.max_coords_per_tensor = 24;
  auto results = gradcheck_layers(cfg);
  for (const auto& r : results) {
    INFO(r.group);
    CHECK(r.max_rel_err < cfg.tol);
  }
}
