#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "iganet/data.hpp"
#include "iganet/metrics.hpp"

using namespace iganet;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(std::string p) : path(std::move(p)) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("dataset save/load round trip is bit-identical") {
  SkeletonGraph g = build_h36m_17();
  Dataset ds = synth_generate(16, 99, g);
  ds.samples[3].subject = "s1";
  TempFile f("roundtrip.pose");
  save_dataset(f.path, ds);
  Dataset back = load_dataset(f.path, g);
  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.joints == 17);
  CHECK(back.graph_name == "h36m17");
  CHECK(back.warnings.empty());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].input2d == ds.samples[i].input2d);
    CHECK(back.samples[i].target3d == ds.samples[i].target3d);
    CHECK(back.samples[i].action == ds.samples[i].action);
    CHECK(back.samples[i].subject == ds.samples[i].subject);
  }
}

TEST_CASE("empty file with a valid header loads as an empty dataset") {
  SkeletonGraph g = build_h36m_17();
  TempFile f("empty.pose");
  {
    std::ofstream os(f.path);
    os << "#pose-v1 J=17 graph=h36m17\n";
  }
  Dataset ds = load_dataset(f.path, g);
  CHECK(ds.samples.empty());
  CHECK(ds.joints == 17);
}

TEST_CASE("load re-centers a non-zero target root and warns") {
  SkeletonGraph g = build_h36m_17();
  Dataset ds = synth_generate(2, 5, g);
  for (auto& jt : ds.samples[0].target3d) jt.x += 10.0;  // shift the whole pose
  TempFile f("offcenter.pose");
  save_dataset(f.path, ds);
  Dataset back = load_dataset(f.path, g);
  REQUIRE(back.warnings.size() == 1);
  CHECK(back.warnings[0].find("line 2") != std::string::npos);
  CHECK(back.warnings[0].find("re-centered") != std::string::npos);
  const Joint3 root = back.samples[0].target3d[0];
  CHECK(root.x == 0.0);
  CHECK(root.y == 0.0);
  CHECK(root.z == 0.0);
  // re-centering is a translation: offsets from the root are unchanged
  for (std::size_t j = 0; j < 17; ++j) {
    CHECK(back.samples[0].target3d[j].x ==
          doctest::Approx(ds.samples[0].target3d[j].x - 10.0).epsilon(1e-12));
  }
}

TEST_CASE("malformed rows are reported with their line number") {
  SkeletonGraph g = build_h36m_17();
  TempFile f("broken.pose");
  {
    std::ofstream os(f.path);
    os << "#pose-v1 J=17 graph=h36m17\n";
    os << "{\"in\":[[0,0]]}\n";  // wrong joint count
  }
  try {
    load_dataset(f.path, g);
    FAIL("expected a parse error");
  } catch (const std::runtime_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("line 2") != std::string::npos);
  }
}

TEST_CASE("header joint count must match the graph") {
  SkeletonGraph g = build_h36m_17();
  TempFile f("wrongj.pose");
  {
    std::ofstream os(f.path);
    os << "#pose-v1 J=16 graph=custom\n";
  }
  CHECK_THROWS_AS(load_dataset(f.path, g), std::runtime_error);
}

TEST_CASE("2D-only lines load as prediction inputs") {
  SkeletonGraph g = build_h36m_17();
  Dataset ds = synth_generate(3, 4, g);
  for (auto& s : ds.samples) s.has_target = false;
  TempFile f("inputs.pose");
  save_dataset(f.path, ds);
  Dataset back = load_dataset(f.path, g);
  for (const auto& s : back.samples) CHECK(!s.has_target);
}

TEST_CASE("synthetic generation is deterministic by seed") {
  SkeletonGraph g = build_h36m_17();
  Dataset a = synth_generate(24, 7, g);
  Dataset b = synth_generate(24, 7, g);
  Dataset c = synth_generate(24, 8, g);
  REQUIRE(a.samples.size() == b.samples.size());
  bool all_equal = true;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    all_equal = all_equal && a.samples[i].target3d == b.samples[i].target3d &&
                a.samples[i].input2d == b.samples[i].input2d;
  }
  CHECK(all_equal);
  bool differs = false;
  for (std::size_t i = 0; i < a.samples.size() && !differs; ++i) {
    differs = !(a.samples[i].target3d == c.samples[i].target3d);
  }
  CHECK(differs);
}

TEST_CASE("synthetic bone lengths match the configured table") {
  SkeletonGraph g = build_h36m_17();
  SynthSpec spec = default_synth_spec(g);
  std::vector<int> parent = kinematic_parents(g);
  Dataset ds = synth_generate(32, 11, g);
  for (const auto& s : ds.samples) {
    for (int j = 0; j < 17; ++j) {
      if (j == g.root_index) continue;
      const Joint3& child = s.target3d[static_cast<std::size_t>(j)];
      const Joint3& par = s.target3d[static_cast<std::size_t>(parent[static_cast<std::size_t>(j)])];
      const double len = std::sqrt((child.x - par.x) * (child.x - par.x) +
                                   (child.y - par.y) * (child.y - par.y) +
                                   (child.z - par.z) * (child.z - par.z));
      CHECK(len == doctest::Approx(spec.length_mm[static_cast<std::size_t>(j)]).epsilon(1e-9));
    }
  }
}

TEST_CASE("synthetic samples satisfy the pose invariants") {
  SkeletonGraph g = build_h36m_17();
  Dataset ds = synth_generate(64, 13, g);
  for (const auto& s : ds.samples) {
    const Joint3 root = s.target3d[0];
    CHECK(root.x == 0.0);
    CHECK(root.y == 0.0);
    CHECK(root.z == 0.0);
    for (const auto& jt : s.input2d) {
      CHECK(std::abs(jt.x) <= 1.0);
      CHECK(std::abs(jt.y) <= 1.0);
    }
    CHECK(s.action == "synth");
    // every bone tilts toward positive depth, so lifted depth is recoverable
    for (std::size_t j = 1; j < 17; ++j) CHECK(std::isfinite(s.target3d[j].z));
  }
}

TEST_CASE("flip augmentation") {
  SkeletonGraph g = build_h36m_17();
  Dataset base = synth_generate(20, 17, g);
  Rng rng(1);

  SUBCASE("p = 0 leaves the batch unchanged") {
    auto batch = base.samples;
    augment_flip(batch, g, 0.0, rng);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      CHECK(batch[i].input2d == base.samples[i].input2d);
      CHECK(batch[i].target3d == base.samples[i].target3d);
    }
  }

  SUBCASE("p = 1 flips every sample and flipping twice restores the original") {
    auto batch = base.samples;
    augment_flip(batch, g, 1.0, rng);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      CHECK(batch[i].input2d == horizontal_flip(base.samples[i].input2d, g));
    }
    augment_flip(batch, g, 1.0, rng);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      CHECK(batch[i].input2d == base.samples[i].input2d);
      CHECK(batch[i].target3d == base.samples[i].target3d);
    }
  }

  SUBCASE("augmentation preserves size and labels") {
    auto batch = base.samples;
    augment_flip(batch, g, 0.5, rng);
    REQUIRE(batch.size() == base.samples.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      CHECK(batch[i].action == base.samples[i].action);
      CHECK(batch[i].input2d.size() == 17);
    }
  }

  SUBCASE("flipping prediction and target together preserves the error") {
    auto pred_batch = synth_generate(8, 19, g);
    std::vector<Pose3d> pred, gt, pred_f, gt_f;
    for (std::size_t i = 0; i < 8; ++i) {
      pred.push_back(pred_batch.samples[i].target3d);
      gt.push_back(base.samples[i].target3d);
      pred_f.push_back(horizontal_flip(pred.back(), g));
      gt_f.push_back(horizontal_flip(gt.back(), g));
    }
    CHECK(mpjpe(pred_f, gt_f) == doctest::Approx(mpjpe(pred, gt)).epsilon(1e-12));
  }
}

TEST_CASE("tensor bridging round trip") {
  SkeletonGraph g = build_h36m_17();
  Dataset ds = synth_generate(5, 23, g);
  std::vector<int> idx = {0, 2, 4};
  Tensor in = batch_inputs(ds.samples, idx);
  REQUIRE(in.shape() == Shape{3, 17, 2});
  CHECK(in.at({1, 3, 0}) == ds.samples[2].input2d[3].x);

  Tensor tgt = batch_targets(ds.samples, idx);
  REQUIRE(tgt.shape() == Shape{3, 17, 3});
  std::vector<Pose3d> back = tensor_to_poses(tgt);
  REQUIRE(back.size() == 3);
  CHECK(back[1] == ds.samples[2].target3d);
}
