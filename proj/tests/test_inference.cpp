#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "dcan/inference.hpp"
#include "dcan/labels.hpp"
#include "oracles.hpp"

using namespace dcan;
using namespace dcan::infer;

namespace {

// T=4, D=2 playground: cell (1,1) has ts=1, te=3, interval [0.25, 0.75].
VideoScores small_scores() {
  VideoScores vs;
  vs.T = 4;
  vs.D = 2;
  vs.p_start = {0.1, 0.8, 0.1, 0.1};
  vs.p_end = {0.1, 0.1, 0.1, 0.9};
  vs.m_cls.assign(8, 0.0);
  vs.m_reg.assign(8, 0.0);
  vs.m_cls[1 * 4 + 1] = 0.5;
  vs.m_reg[1 * 4 + 1] = 0.6;
  vs.valid_mask = labels::make_valid_mask(2, 4);
  return vs;
}

const Proposal* find_proposal(const std::vector<Proposal>& props, double start,
                              double end) {
  for (const Proposal& p : props) {
    if (std::abs(p.start - start) < 1e-12 && std::abs(p.end - end) < 1e-12) {
      return &p;
    }
  }
  return nullptr;
}

}  // namespace

TEST_CASE("fused score follows the combination formula") {
  VideoScores vs = small_scores();
  FusionConfig cfg;
  cfg.gamma = 0.8;
  auto props = fuse_scores(vs, cfg);
  // Valid cells: row 0 -> j in 0..3 has j+1 <= 4 always (4 cells);
  // row 1 -> j+2 <= 4 (3 cells). 7 candidates total.
  CHECK(props.size() == 7);
  const Proposal* p = find_proposal(props, 0.25, 0.75);
  REQUIRE(p != nullptr);
  CHECK(p->score == doctest::Approx(0.72 * std::pow(0.3, 0.8)).epsilon(1e-12));
  CHECK(std::abs(p->score - 0.2748081) < 1e-5);

  cfg.gamma = 1.0;  // plain product
  props = fuse_scores(vs, cfg);
  p = find_proposal(props, 0.25, 0.75);
  REQUIRE(p != nullptr);
  CHECK(p->score == doctest::Approx(0.8 * 0.9 * 0.5 * 0.6).epsilon(1e-12));

  // Any zero factor kills the score.
  vs.m_reg[1 * 4 + 1] = 0.0;
  props = fuse_scores(vs, cfg);
  p = find_proposal(props, 0.25, 0.75);
  REQUIRE(p != nullptr);
  CHECK(p->score == 0.0);
}

TEST_CASE("interval ending at T reads the last probability sample") {
  VideoScores vs = small_scores();
  vs.p_start[2] = 0.8;
  vs.m_cls[1 * 4 + 2] = 0.5;  // cell (1,2): ts=2, te=4 -> clamped index 3
  vs.m_reg[1 * 4 + 2] = 0.6;
  FusionConfig cfg;
  cfg.gamma = 1.0;
  auto props = fuse_scores(vs, cfg);
  const Proposal* p = find_proposal(props, 0.5, 1.0);
  REQUIRE(p != nullptr);
  CHECK(p->score == doctest::Approx(0.8 * vs.p_end[3] * 0.3).epsilon(1e-12));
}

TEST_CASE("boundary filter keeps only half-max boundaries") {
  std::vector<double> p_start = {1.0, 0.4, 0.6, 0.5};
  std::vector<double> p_end = {0.2, 0.2, 0.2, 0.2};  // all equal: never filters
  std::vector<Proposal> props = {
      {0.0, 0.5, 1.0},   // ts=0: 1.0 >= 0.5 keep
      {0.25, 0.75, 1.0}, // ts=1: 0.4 < 0.5 drop
      {0.5, 1.0, 1.0},   // ts=2: 0.6 keep
      {0.75, 1.0, 1.0},  // ts=3: 0.5 == half-max, inclusive keep
  };
  auto kept = filter_boundaries(props, p_start, p_end);
  REQUIRE(kept.size() == 3);
  CHECK(find_proposal(kept, 0.25, 0.75) == nullptr);
  CHECK(find_proposal(kept, 0.75, 1.0) != nullptr);  // exact half survives

  // All-equal probabilities filter nothing.
  std::vector<double> flat(4, 0.7);
  CHECK(filter_boundaries(props, flat, flat).size() == props.size());

  // An empty survivor set is legal output.
  std::vector<double> spiky = {1.0, 0.0, 0.0, 0.0};
  std::vector<Proposal> late = {{0.25, 0.75, 1.0}};
  CHECK(filter_boundaries(late, spiky, flat).empty());
}

TEST_CASE("soft-nms: single proposal unchanged") {
  FusionConfig cfg;
  auto out = soft_nms({{0.1, 0.6, 0.7}}, cfg);
  REQUIRE(out.size() == 1);
  CHECK(out[0].score == 0.7);
  CHECK(out[0].start == 0.1);
}

TEST_CASE("soft-nms gaussian decay of an exact duplicate") {
  FusionConfig cfg;
  cfg.snms_sigma = 0.4;
  auto out = soft_nms({{0.0, 1.0, 0.9}, {0.0, 1.0, 0.8}}, cfg);
  REQUIRE(out.size() == 2);
  CHECK(out[0].score == 0.9);
  CHECK(out[1].score == doctest::Approx(0.8 * std::exp(-2.5)).epsilon(1e-9));
  CHECK(out[1].score == doctest::Approx(0.06566).epsilon(1e-3));
}

TEST_CASE("soft-nms gaussian leaves disjoint proposals untouched") {
  FusionConfig cfg;
  auto out = soft_nms({{0.0, 0.3, 0.9}, {0.5, 0.8, 0.6}}, cfg);
  REQUIRE(out.size() == 2);
  CHECK(out[1].score == 0.6);  // iou = 0 -> factor e^0 = 1
}

TEST_CASE("soft-nms linear mode decays only above the threshold") {
  FusionConfig cfg;
  cfg.snms_mode = FusionConfig::SnmsMode::Linear;
  cfg.snms_threshold = 0.5;
  // iou([0,1],[0.2,1]) = 0.8 > 0.5 -> decay by (1-0.8).
  auto out = soft_nms({{0.0, 1.0, 0.9}, {0.2, 1.0, 0.5}}, cfg);
  CHECK(out[1].score == doctest::Approx(0.5 * 0.2).epsilon(1e-12));
  // iou([0,0.5],[0.4,1]) = 1/6 < 0.5 -> untouched.
  out = soft_nms({{0.0, 0.5, 0.9}, {0.4, 1.0, 0.5}}, cfg);
  CHECK(out[1].score == 0.5);
}

TEST_CASE("soft-nms never raises scores nor changes intervals, caps at n_final") {
  Rng rng(61);
  std::vector<Proposal> pool;
  for (int i = 0; i < 40; ++i) {
    const double s = rng.uniform(0.0, 0.8);
    pool.push_back({s, s + rng.uniform(0.05, 0.2), rng.uniform(0.0, 1.0)});
  }
  FusionConfig cfg;
  cfg.n_final = 25;
  auto out = soft_nms(pool, cfg);
  CHECK(out.size() == 25);
  for (const Proposal& p : out) {
    bool found = false;
    for (const Proposal& q : pool) {
      if (q.start == p.start && q.end == p.end) {
        found = true;
        CHECK(p.score <= q.score + 1e-15);
      }
    }
    CHECK(found);
  }
  for (std::size_t i = 1; i < out.size(); ++i) {
    CHECK(out[i - 1].score >= out[i].score);
  }
}

TEST_CASE("deterministic ordering with tie-break (earlier start, shorter)") {
  FusionConfig cfg;
  std::vector<Proposal> pool = {
      {0.6, 0.9, 0.5}, {0.2, 0.5, 0.5}, {0.2, 0.4, 0.5}};
  // All disjoint enough that gaussian decay keeps exact ties? Not quite:
  // decay perturbs scores, so check the argmax selection order instead.
  auto out = soft_nms(pool, cfg);
  REQUIRE(out.size() == 3);
  CHECK(out[0].start == 0.2);
  CHECK(out[0].end == 0.4);  // shorter duration wins the tie
}

TEST_CASE("raising one cell's m_cls raises exactly that fused score") {
  VideoScores vs = small_scores();
  vs.m_cls.assign(8, 0.4);
  vs.m_reg.assign(8, 0.5);
  FusionConfig cfg;
  auto before = fuse_scores(vs, cfg);
  vs.m_cls[0 * 4 + 2] += 0.3;  // cell (0,2): interval [0.5, 0.75)
  auto after = fuse_scores(vs, cfg);
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) {
    if (std::abs(before[i].start - 0.5) < 1e-12 &&
        std::abs(before[i].end - 0.75) < 1e-12) {
      CHECK(after[i].score > before[i].score);
    } else {
      CHECK(after[i].score == before[i].score);
    }
  }
}

TEST_CASE("fuse emits exactly the valid cells that pass the filter") {
  VideoScores vs;
  vs.T = 6;
  vs.D = 3;
  vs.p_start = {0.9, 0.1, 0.9, 0.9, 0.9, 0.9};
  vs.p_end = {0.9, 0.9, 0.9, 0.9, 0.9, 0.9};
  vs.m_cls.assign(18, 0.5);
  vs.m_reg.assign(18, 0.5);
  vs.valid_mask = labels::make_valid_mask(3, 6);
  std::size_t valid =
      std::count(vs.valid_mask.begin(), vs.valid_mask.end(), 1);

  FusionConfig cfg;
  auto fused = fuse_scores(vs, cfg);
  CHECK(fused.size() == valid);
  auto kept = filter_boundaries(fused, vs.p_start, vs.p_end);
  // Starts at index 1 (prob 0.1 < 0.45) are dropped: 3 cells begin there.
  CHECK(kept.size() == valid - 3);
}

TEST_CASE("slice_output extracts one batch element") {
  model::ForwardOutput out;
  out.p_start = Tensor({2, 3}, {0.1, 0.2, 0.3, 0.4, 0.5, 0.6});
  out.p_end = Tensor({2, 3}, {0.9, 0.8, 0.7, 0.6, 0.5, 0.4});
  out.m_cls = Tensor({2, 2, 3}, 0.5);
  out.m_reg = Tensor({2, 2, 3}, 0.6);
  out.valid_mask = labels::make_valid_mask(2, 3);
  VideoScores vs = slice_output(out, 1);
  CHECK(vs.T == 3);
  CHECK(vs.D == 2);
  CHECK(vs.p_start == std::vector<double>{0.4, 0.5, 0.6});
  CHECK(vs.p_end[0] == 0.6);
  CHECK(vs.m_cls.size() == 6);
}
