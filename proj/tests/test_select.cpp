#include <doctest.h>

#include <cmath>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "esckit/core.hpp"
#include "esckit/select.hpp"

using esckit::Mat;
using esckit::Vec;

namespace {

// Six one-sample rows whose values encode their row number, so a selection
// can be traced back to the ensemble row it came from.
esckit::PosteriorEnsemble numbered_ensemble() {
  Vec y(1);
  y << 0.0;
  esckit::PosteriorEnsemble ens;
  ens.condition = esckit::make_signal(y, 1.0);
  ens.samples = Mat(6, 1);
  ens.samples << 0.0, 10.0, 20.0, 30.0, 40.0, 50.0;
  ens.sample_rate_hz = 1.0;
  return ens;
}

esckit::AgreementFilter filter_of(std::vector<int> indices,
                                  std::vector<double> scores) {
  esckit::AgreementFilter f;
  f.indices = std::move(indices);
  f.scores = std::move(scores);
  return f;
}

}  // namespace

TEST_CASE("silverman bandwidth") {
  CHECK(esckit::silverman_bandwidth({0.2, 0.4, 0.6, 0.8}) ==
        doctest::Approx(0.20741885736151283).epsilon(1e-12));
  // Degenerate spreads fall back to the floor.
  CHECK(esckit::silverman_bandwidth({0.5, 0.5, 0.5}) == 1e-3);
  CHECK(esckit::silverman_bandwidth({0.7}) == 1e-3);
}

TEST_CASE("kde integrates to one and peaks at the data") {
  // A tight cluster at 0.5 over a broad background: one decisive mode.
  std::vector<double> scores;
  for (int i = 0; i < 30; ++i) scores.push_back(0.45 + 0.1 * i / 29.0);
  for (int i = 0; i < 20; ++i) scores.push_back(0.25 + 0.5 * i / 19.0);
  const esckit::KdeEstimate k = esckit::kde(scores, 64);
  REQUIRE(k.grid.size() == 64);
  REQUIRE(k.density.size() == 64);
  double mass = 0.0;
  int argmax = 0;
  for (std::size_t i = 0; i < k.density.size(); ++i) {
    REQUIRE(k.density[i] >= 0.0);
    mass += k.density[i] * (1.0 / 64.0);
    if (k.density[i] > k.density[static_cast<std::size_t>(argmax)]) {
      argmax = static_cast<int>(i);
    }
  }
  // The kernel mass outside [0,1] is tiny here, the grid sum is close to 1.
  CHECK(mass == doctest::Approx(1.0).epsilon(0.02));
  CHECK(std::abs(k.grid[static_cast<std::size_t>(argmax)] - 0.5) < 0.06);
  CHECK_THROWS_AS((void)esckit::kde({1.5}, 64), esckit::ValidationError);
  CHECK_THROWS_AS((void)esckit::kde({}, 64), esckit::ValidationError);
  CHECK_THROWS_AS((void)esckit::kde({0.5}, 0), esckit::ValidationError);
}

TEST_CASE("agreement filter keeps matching decisions only") {
  const auto ens = numbered_ensemble();
  const esckit::ScoreSet scores =
      esckit::make_score_set({0.9, 0.2, 0.7, 0.4, 0.51, 0.5});
  const esckit::AgreementFilter pos = esckit::agreement_filter(ens, scores, 1, 0.5);
  CHECK(pos.indices == std::vector<int>{0, 2, 4});
  CHECK(pos.scores == std::vector<double>{0.9, 0.7, 0.51});
  CHECK_FALSE(pos.fallback_full);

  // A score exactly at the threshold decides 0.
  const esckit::AgreementFilter neg = esckit::agreement_filter(ens, scores, 0, 0.5);
  CHECK(neg.indices == std::vector<int>{1, 3, 5});
  CHECK_FALSE(neg.fallback_full);

  const esckit::ScoreSet one_sided = esckit::make_score_set(
      std::vector<double>(6, 0.9));
  const esckit::AgreementFilter empty =
      esckit::agreement_filter(ens, one_sided, 0, 0.5);
  CHECK(empty.fallback_full);
  CHECK(empty.indices.size() == 6);
}

TEST_CASE("most likely selection follows the densest bin") {
  const auto ens = numbered_ensemble();
  const auto filtered = filter_of({3, 1, 4}, {0.1, 0.5, 0.9});
  esckit::KdeEstimate density;
  density.grid = {0.25, 0.75};
  density.density = {1.0, 2.0};
  density.bandwidth = 0.1;
  const esckit::Selection sel =
      esckit::most_likely_score_ecg(ens, filtered, density);
  CHECK(sel.index == 4);
  CHECK(sel.score == 0.9);
  CHECK(sel.signal.values[0] == 40.0);

  // Density ties resolve to the lower bin, score ties to the lower index.
  density.density = {2.0, 2.0};
  const esckit::Selection tie =
      esckit::most_likely_score_ecg(ens, filtered, density);
  CHECK(tie.index == 3);
  CHECK(tie.score == 0.1);
  CHECK(tie.signal.values[0] == 30.0);
}

TEST_CASE("expected selection picks the score nearest the mean") {
  const auto ens = numbered_ensemble();
  const auto filtered = filter_of({0, 2, 5}, {0.2, 0.5, 0.95});
  // Mean 0.55, nearest score 0.5 at ensemble row 2.
  const esckit::Selection sel = esckit::expected_score_ecg(ens, filtered);
  CHECK(sel.index == 2);
  CHECK(sel.score == 0.5);
  CHECK(sel.signal.values[0] == 20.0);
}

TEST_CASE("minmax selection is the most committed sample") {
  const auto ens = numbered_ensemble();
  const auto filtered = filter_of({1, 3, 5}, {0.6, 0.8, 0.7});
  const esckit::Selection hi = esckit::minmax_score_ecg(ens, filtered, 1);
  CHECK(hi.index == 3);
  CHECK(hi.score == 0.8);
  const esckit::Selection lo = esckit::minmax_score_ecg(ens, filtered, 0);
  CHECK(lo.index == 1);
  CHECK(lo.score == 0.6);
}

TEST_CASE("selection functions reject an empty filter") {
  const auto ens = numbered_ensemble();
  const auto filtered = filter_of({}, {});
  esckit::KdeEstimate density;
  density.grid = {0.5};
  density.density = {1.0};
  CHECK_THROWS_AS((void)esckit::most_likely_score_ecg(ens, filtered, density),
                  esckit::ValidationError);
  CHECK_THROWS_AS((void)esckit::expected_score_ecg(ens, filtered),
                  esckit::ValidationError);
  CHECK_THROWS_AS((void)esckit::minmax_score_ecg(ens, filtered, 1),
                  esckit::ValidationError);
}

TEST_CASE("selection report round trips through json") {
  std::vector<esckit::SelectionRecord> records;
  records.push_back({0, "MOST_LIKELY", 4, 0.9});
  records.push_back({0, "EXPECTED", 2, 0.5});
  records.push_back({1, "MINMAX", 7, 0.25});
  const std::string path = "/tmp/esckit_test_selections.json";
  esckit::selection_report_write(path, records);

  std::ifstream in(path);
  nlohmann::json j;
  in >> j;
  REQUIRE(j.is_array());
  REQUIRE(j.size() == 3);
  CHECK(j[0]["item_index"] == 0);
  CHECK(j[0]["strategy"] == "MOST_LIKELY");
  CHECK(j[0]["selected_index"] == 4);
  CHECK(j[0]["selected_score"] == 0.9);
  CHECK(j[2]["strategy"] == "MINMAX");
  CHECK(j[2]["selected_score"] == 0.25);
}
