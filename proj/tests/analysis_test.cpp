#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "cropstress/analysis/analysis.hpp"
#include "cropstress/core/error.hpp"
#include "cropstress/core/rng.hpp"
#include "cropstress/core/util.hpp"
#include "cropstress/phenology/align.hpp"
#include "doctest.h"

using namespace cropstress;
using analysis::ConfusionMatrix;
using analysis::DensityCurve;
using analysis::ImportanceReport;
using analysis::MetricSet;
using analysis::Report;
using core::Error;
using core::ErrorKind;

namespace {

lstm::Dataset make_ds(int n, int steps, int features) {
  lstm::Dataset d;
  d.n = n;
  d.steps = steps;
  d.features = features;
  d.inputs.assign(static_cast<std::size_t>(n) * steps * features, 0.0);
  d.labels.assign(n, 0);
  return d;
}

double& at(lstm::Dataset& d, int i, int t, int f) {
  return d.inputs[(static_cast<std::size_t>(i) * d.steps + t) * d.features + f];
}

// Linear stub predictor: mean over steps of a weighted feature sum, cut at a
// threshold. Fast and exactly deterministic, which is what the importance
// tests need.
analysis::Predictor linear_predictor(std::vector<double> weights, double threshold) {
  return [weights, threshold](const lstm::Dataset& d) {
    std::vector<std::uint8_t> out(d.n);
    for (int i = 0; i < d.n; ++i) {
      double score = 0.0;
      for (int t = 0; t < d.steps; ++t) {
        for (int f = 0; f < d.features; ++f) {
          score += weights[f] * d.inputs[(static_cast<std::size_t>(i) * d.steps + t) * d.features + f];
        }
      }
      score /= static_cast<double>(d.steps);
      out[i] = score > threshold ? 1 : 0;
    }
    return out;
  };
}

bool is_entity(const std::string& s, std::size_t i) {
  static const char* kEntities[] = {"&amp;", "&lt;", "&gt;", "&quot;", "&apos;"};
  for (const char* e : kEntities) {
    if (s.compare(i, std::strlen(e), e) == 0) return true;
  }
  return false;
}

// Minimal strict XML well-formedness check: balanced quoted attributes,
// matching tag nesting, no stray <, > or bare & anywhere.
bool well_formed_xml(const std::string& s) {
  std::vector<std::string> stack;
  bool seen_element = false;
  std::size_t i = 0;
  while (i < s.size()) {
    const char c = s[i];
    if (c == '>') return false;
    if (c == '&') {
      if (!is_entity(s, i)) return false;
      ++i;
      continue;
    }
    if (c != '<') {
      ++i;
      continue;
    }
    if (s.compare(i, 2, "<?") == 0) {
      const std::size_t end = s.find("?>", i);
      if (end == std::string::npos) return false;
      i = end + 2;
      continue;
    }
    if (s.compare(i, 2, "</") == 0) {
      const std::size_t end = s.find('>', i);
      if (end == std::string::npos || stack.empty()) return false;
      if (s.substr(i + 2, end - i - 2) != stack.back()) return false;
      stack.pop_back();
      i = end + 1;
      continue;
    }
    std::size_t j = i + 1;
    const std::size_t name_start = j;
    while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '-' ||
                            s[j] == '_' || s[j] == ':')) {
      ++j;
    }
    if (j == name_start) return false;
    const std::string name = s.substr(name_start, j - name_start);
    bool self_close = false;
    bool closed = false;
    while (j < s.size()) {
      while (j < s.size() && std::isspace(static_cast<unsigned char>(s[j]))) ++j;
      if (j >= s.size()) return false;
      if (s[j] == '>') {
        ++j;
        closed = true;
        break;
      }
      if (s.compare(j, 2, "/>") == 0) {
        j += 2;
        self_close = true;
        closed = true;
        break;
      }
      const std::size_t attr_start = j;
      while (j < s.size() && s[j] != '=' && s[j] != '>' &&
             !std::isspace(static_cast<unsigned char>(s[j]))) {
        ++j;
      }
      if (j == attr_start || j >= s.size() || s[j] != '=') return false;
      ++j;
      if (j >= s.size() || s[j] != '"') return false;
      ++j;
      while (j < s.size() && s[j] != '"') {
        if (s[j] == '<') return false;
        if (s[j] == '&' && !is_entity(s, j)) return false;
        ++j;
      }
      if (j >= s.size()) return false;
      ++j;
    }
    if (!closed) return false;
    seen_element = true;
    if (!self_close) stack.push_back(name);
    i = j;
  }
  return stack.empty() && seen_element;
}

std::filesystem::path fresh_dir(const std::string& leaf) {
  const std::filesystem::path dir = std::filesystem::temp_directory_path() / leaf;
  std::filesystem::remove_all(dir);
  return dir;
}

}  // namespace

TEST_CASE("confusion counts and normalization") {
  SUBCASE("perfect predictions have zero off-diagonals") {
    const std::vector<std::uint8_t> labels = {1, 0, 1, 1, 0, 0, 1};
    const ConfusionMatrix cm = analysis::confusion(labels, labels);
    CHECK(cm.tp == 4);
    CHECK(cm.tn == 3);
    CHECK(cm.fp == 0);
    CHECK(cm.fn == 0);
    CHECK(cm.normalized[0][0] == 1.0);
    CHECK(cm.normalized[0][1] == 0.0);
    CHECK(cm.normalized[1][0] == 0.0);
    CHECK(cm.normalized[1][1] == 1.0);
  }

  SUBCASE("all-positive predictor on balanced labels") {
    std::vector<std::uint8_t> labels(10, 0);
    for (int i = 0; i < 5; ++i) labels[i] = 1;
    const std::vector<std::uint8_t> preds(10, 1);
    const ConfusionMatrix cm = analysis::confusion(labels, preds);
    CHECK(cm.fp == 5);  // every true negative lands in fp
    CHECK(cm.tn == 0);
    CHECK(cm.fn == 0);
    CHECK(cm.normalized[1][0] == 1.0);
    CHECK(cm.normalized[1][1] == 0.0);
  }

  SUBCASE("random case matches direct pair counting") {
    core::Rng rng(3);
    std::vector<std::uint8_t> labels(500), preds(500);
    for (int i = 0; i < 500; ++i) {
      labels[i] = static_cast<std::uint8_t>(rng.below(2));
      preds[i] = static_cast<std::uint8_t>(rng.below(2));
    }
    const ConfusionMatrix cm = analysis::confusion(labels, preds);
    std::int64_t counts[2][2] = {};  // [label][pred]
    for (int i = 0; i < 500; ++i) counts[labels[i]][preds[i]] += 1;
    CHECK(cm.tp == counts[1][1]);
    CHECK(cm.fn == counts[1][0]);
    CHECK(cm.fp == counts[0][1]);
    CHECK(cm.tn == counts[0][0]);
    CHECK(cm.total() == 500);
    CHECK(cm.normalized[0][0] + cm.normalized[0][1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(cm.normalized[1][0] + cm.normalized[1][1] == doctest::Approx(1.0).epsilon(1e-12));
  }

  SUBCASE("input contract") {
    const std::vector<std::uint8_t> empty;
    CHECK_THROWS_AS(analysis::confusion(empty, empty), Error);
    const std::vector<std::uint8_t> a = {1, 0};
    const std::vector<std::uint8_t> b = {1};
    CHECK_THROWS_AS(analysis::confusion(a, b), Error);
    const std::vector<std::uint8_t> bad = {2, 0};
    CHECK_THROWS_AS(analysis::confusion(bad, a), Error);
  }
}

TEST_CASE("classification metrics") {
  SUBCASE("reference confusion matrix") {
    std::vector<std::uint8_t> labels, preds;
    const auto add = [&](int y, int p, int count) {
      for (int i = 0; i < count; ++i) {
        labels.push_back(static_cast<std::uint8_t>(y));
        preds.push_back(static_cast<std::uint8_t>(p));
      }
    };
    add(1, 1, 92);
    add(1, 0, 8);
    add(0, 1, 15);
    add(0, 0, 85);
    const MetricSet m = analysis::metrics(analysis::confusion(labels, preds));
    CHECK(m.accuracy == doctest::Approx(177.0 / 200.0).epsilon(1e-12));
    REQUIRE(m.precision.has_value());
    REQUIRE(m.recall.has_value());
    REQUIRE(m.f1.has_value());
    const double p = 92.0 / 107.0;
    const double r = 92.0 / 100.0;
    CHECK(*m.precision == doctest::Approx(p).epsilon(1e-12));
    CHECK(*m.recall == doctest::Approx(r).epsilon(1e-12));
    CHECK(*m.f1 == doctest::Approx(2.0 * p * r / (p + r)).epsilon(1e-12));
    CHECK(std::round(*m.precision * 100.0) / 100.0 == 0.86);
    CHECK(std::round(*m.recall * 100.0) / 100.0 == 0.92);
    CHECK(std::round(*m.f1 * 100.0) / 100.0 == 0.89);
  }

  SUBCASE("zero denominators flagged absent, never zero") {
    // nothing predicted positive: precision undefined, recall defined
    const std::vector<std::uint8_t> labels = {1, 1, 0, 0};
    const std::vector<std::uint8_t> none(4, 0);
    const MetricSet m = analysis::metrics(analysis::confusion(labels, none));
    CHECK_FALSE(m.precision.has_value());
    REQUIRE(m.recall.has_value());
    CHECK(*m.recall == 0.0);
    CHECK_FALSE(m.f1.has_value());

    // no positive labels at all: recall undefined too
    const std::vector<std::uint8_t> zeros(4, 0);
    const MetricSet m2 = analysis::metrics(analysis::confusion(zeros, zeros));
    CHECK(m2.accuracy == 1.0);
    CHECK_FALSE(m2.precision.has_value());
    CHECK_FALSE(m2.recall.has_value());
    CHECK_FALSE(m2.f1.has_value());

    // precision and recall both land on 0: harmonic mean is 0/0
    const std::vector<std::uint8_t> y = {1, 1, 0, 0};
    const std::vector<std::uint8_t> swapped = {0, 0, 1, 1};
    const MetricSet m3 = analysis::metrics(analysis::confusion(y, swapped));
    REQUIRE(m3.precision.has_value());
    REQUIRE(m3.recall.has_value());
    CHECK(*m3.precision == 0.0);
    CHECK(*m3.recall == 0.0);
    CHECK_FALSE(m3.f1.has_value());
  }

  SUBCASE("all-correct accuracy is exactly one") {
    const std::vector<std::uint8_t> labels = {1, 0, 1};
    CHECK(analysis::metrics(analysis::confusion(labels, labels)).accuracy == 1.0);
  }

  SUBCASE("empty confusion matrix rejected") {
    CHECK_THROWS_AS(analysis::metrics(ConfusionMatrix{}), Error);
  }
}

TEST_CASE("permutation importance") {
  SUBCASE("constant feature scores exactly zero") {
    lstm::Dataset d = make_ds(60, 3, 3);
    core::Rng rng(11);
    for (int i = 0; i < d.n; ++i) {
      d.labels[i] = static_cast<std::uint8_t>(i % 2);
      for (int t = 0; t < d.steps; ++t) {
        at(d, i, t, 0) = d.labels[i] + rng.normal(0.0, 0.2);
        at(d, i, t, 1) = 0.7;  // constant everywhere
        at(d, i, t, 2) = rng.normal(0.0, 1.0);
      }
    }
    const auto predict = linear_predictor({1.0, 0.0, 0.0}, 0.5);
    const ImportanceReport rep =
        analysis::permutation_importance(predict, d, {"a", "flat", "b"}, 5, 42);
    CHECK(rep.mean_drop[1] == 0.0);
    CHECK(rep.std_drop[1] == 0.0);
    CHECK(rep.features[1] == "flat");
  }

  SUBCASE("only the informative feature carries signal") {
    const int n = 1000;
    lstm::Dataset d = make_ds(n, 4, 5);
    core::Rng rng(5);
    for (int i = 0; i < n; ++i) {
      d.labels[i] = static_cast<std::uint8_t>(i % 2);
      for (int t = 0; t < d.steps; ++t) {
        for (int f = 0; f < d.features; ++f) {
          at(d, i, t, f) = rng.normal(0.0, 1.0);
        }
        at(d, i, t, 2) = d.labels[i] + rng.normal(0.0, 0.3);
      }
    }
    // mildly weights the noise features so their permutations can flip a
    // few predictions; the statistic should still vanish
    const auto predict = linear_predictor({0.15, 0.15, 1.0, 0.15, 0.15}, 0.5);
    const ImportanceReport rep = analysis::permutation_importance(
        predict, d, {"n0", "n1", "signal", "n2", "n3"}, 10, 9);
    CHECK(rep.baseline_accuracy > 0.9);
    CHECK(rep.ranking[0] == 2);
    CHECK(rep.mean_drop[2] > 0.1);
    for (const int f : {0, 1, 3, 4}) {
      CHECK(std::abs(rep.mean_drop[f]) < 0.02);
    }

    // ranking is a permutation sorted by mean drop
    std::vector<int> sorted = rep.ranking;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> iota(d.features);
    std::iota(iota.begin(), iota.end(), 0);
    CHECK(sorted == iota);
    for (std::size_t k = 0; k + 1 < rep.ranking.size(); ++k) {
      CHECK(rep.mean_drop[rep.ranking[k]] >= rep.mean_drop[rep.ranking[k + 1]]);
    }

    // fixed seed reproduces the report bit for bit
    const ImportanceReport again = analysis::permutation_importance(
        predict, d, {"n0", "n1", "signal", "n2", "n3"}, 10, 9);
    CHECK(again.baseline_accuracy == rep.baseline_accuracy);
    CHECK(again.mean_drop == rep.mean_drop);
    CHECK(again.std_drop == rep.std_drop);
    CHECK(again.ranking == rep.ranking);
  }

  SUBCASE("input contract") {
    lstm::Dataset d = make_ds(4, 2, 2);
    for (int i = 0; i < 4; ++i) d.labels[i] = static_cast<std::uint8_t>(i % 2);
    const auto predict = linear_predictor({1.0, 0.0}, 0.0);
    CHECK_THROWS_AS(analysis::permutation_importance(predict, d, {"a", "b"}, 0, 1), Error);
    CHECK_THROWS_AS(analysis::permutation_importance(predict, d, {"a"}, 1, 1), Error);
    const analysis::Predictor broken = [](const lstm::Dataset&) {
      return std::vector<std::uint8_t>{1};
    };
    CHECK_THROWS_AS(analysis::permutation_importance(broken, d, {"a", "b"}, 1, 1), Error);
  }
}

TEST_CASE("kernel density estimation") {
  SUBCASE("bandwidth and grid bounds follow the rule") {
    const std::vector<double> v = {1.0, 2.0, 3.0, 4.0, 5.0};
    const DensityCurve c = analysis::kde(v, "x", "clean", 101);
    const double sigma = std::sqrt(2.0);  // population sigma of 1..5
    const double h = 1.06 * sigma * std::pow(5.0, -0.2);
    CHECK(c.bandwidth == doctest::Approx(h).epsilon(1e-12));
    CHECK(c.value.front() == doctest::Approx(1.0 - 3.0 * h).epsilon(1e-12));
    CHECK(c.value.back() == doctest::Approx(5.0 + 3.0 * h).epsilon(1e-12));
    CHECK(c.value.size() == 101);
    CHECK(c.density.size() == 101);
    const double step0 = c.value[1] - c.value[0];
    for (std::size_t i = 1; i + 1 < c.value.size(); ++i) {
      CHECK(c.value[i + 1] - c.value[i] == doctest::Approx(step0).epsilon(1e-9));
    }
    for (const double d : c.density) CHECK(d >= 0.0);
    CHECK(c.feature == "x");
    CHECK(c.class_tag == "clean");
  }

  SUBCASE("tight cluster peaks at the cluster") {
    core::Rng rng(17);
    std::vector<double> v(50);
    for (double& x : v) x = 5.0 + rng.normal(0.0, 0.01);
    const DensityCurve c = analysis::kde(v, "x", "clean", 301);
    const std::size_t arg = static_cast<std::size_t>(
        std::max_element(c.density.begin(), c.density.end()) - c.density.begin());
    CHECK(std::abs(c.value[arg] - 5.0) < 0.05);
  }

  SUBCASE("trapezoid integral close to one") {
    core::Rng rng(7);
    std::vector<double> v(200);
    for (double& x : v) x = rng.normal(0.0, 1.0);
    const DensityCurve c = analysis::kde(v, "x", "infested", 512);
    double integral = 0.0;
    for (std::size_t i = 0; i + 1 < c.value.size(); ++i) {
      integral += 0.5 * (c.density[i] + c.density[i + 1]) * (c.value[i + 1] - c.value[i]);
    }
    CHECK(std::abs(integral - 1.0) < 1e-3);
  }

  SUBCASE("symmetric data gives a symmetric curve") {
    const std::vector<double> v = {-2.0, -1.3, -0.5, 0.5, 1.3, 2.0};
    const DensityCurve c = analysis::kde(v, "x", "clean", 200);
    const std::size_t g = c.value.size();
    for (std::size_t i = 0; i < g; ++i) {
      CHECK(c.density[i] == doctest::Approx(c.density[g - 1 - i]).epsilon(1e-6));
      CHECK(c.value[i] == doctest::Approx(-c.value[g - 1 - i]).epsilon(1e-9));
    }
  }

  SUBCASE("input contract") {
    CHECK_THROWS_AS(analysis::kde({1.0}, "x", "c", 10), Error);
    CHECK_THROWS_AS(analysis::kde({2.0, 2.0, 2.0}, "x", "c", 10), Error);
    try {
      analysis::kde({2.0, 2.0}, "x", "c", 10);
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::numeric);
    }
    CHECK_THROWS_AS(analysis::kde({1.0, 2.0}, "x", "c", 1), Error);
  }
}

namespace {

Report sample_report() {
  Report report;
  std::vector<std::uint8_t> labels, preds;
  const auto add = [&](int y, int p, int count) {
    for (int i = 0; i < count; ++i) {
      labels.push_back(static_cast<std::uint8_t>(y));
      preds.push_back(static_cast<std::uint8_t>(p));
    }
  };
  add(1, 1, 92);
  add(1, 0, 8);
  add(0, 1, 15);
  add(0, 0, 85);
  report.confusion = analysis::confusion(labels, preds);
  report.metrics = analysis::metrics(report.confusion);

  for (int e = 0; e < 5; ++e) {
    lstm::EpochStats s;
    s.train_loss = 0.7 - 0.1 * e;
    s.train_accuracy = 0.5 + 0.08 * e;
    s.validation_loss = 0.72 - 0.09 * e;
    s.validation_accuracy = 0.5 + 0.07 * e;
    s.has_validation = true;
    report.history.push_back(s);
  }

  const std::vector<std::string>& names = phenology::canonical_feature_names();
  ImportanceReport imp;
  imp.baseline_accuracy = 0.885;
  imp.features = names;
  core::Rng rng(23);
  imp.mean_drop.resize(names.size());
  imp.std_drop.resize(names.size());
  for (std::size_t f = 0; f < names.size(); ++f) {
    imp.mean_drop[f] = rng.uniform(-0.01, 0.2);
    imp.std_drop[f] = rng.uniform(0.0, 0.02);
  }
  imp.ranking.resize(names.size());
  std::iota(imp.ranking.begin(), imp.ranking.end(), 0);
  std::stable_sort(imp.ranking.begin(), imp.ranking.end(),
                   [&](int a, int b) { return imp.mean_drop[a] > imp.mean_drop[b]; });
  report.importance = imp;

  core::Rng vr(31);
  for (const char* feature : {"NDMI", "CCC"}) {
    for (const char* tag : {"infested", "clean"}) {
      std::vector<double> vals(80);
      const double center = std::strcmp(tag, "infested") == 0 ? 0.0 : 1.0;
      for (double& x : vals) x = vr.normal(center, 0.3);
      report.densities.push_back(analysis::kde(vals, feature, tag, 64));
    }
  }
  return report;
}

}  // namespace

TEST_CASE("report emission") {
  const Report report = sample_report();
  const std::filesystem::path dir = fresh_dir("cropstress-analysis-report");
  const std::vector<std::filesystem::path> written = analysis::emit_report(report, dir);
  REQUIRE(written.size() == 8);
  for (const auto& p : written) CHECK(std::filesystem::exists(p));

  SUBCASE("metrics csv round-trips") {
    const MetricSet back = analysis::parse_metrics_csv(dir / "metrics.csv");
    CHECK(back.accuracy == report.metrics.accuracy);
    REQUIRE(back.precision.has_value());
    REQUIRE(back.recall.has_value());
    REQUIRE(back.f1.has_value());
    CHECK(*back.precision == *report.metrics.precision);
    CHECK(*back.recall == *report.metrics.recall);
    CHECK(*back.f1 == *report.metrics.f1);

    // absent metrics survive the trip as absent
    Report degenerate = report;
    degenerate.metrics.precision.reset();
    degenerate.metrics.f1.reset();
    const std::filesystem::path dir2 = fresh_dir("cropstress-analysis-degenerate");
    analysis::emit_report(degenerate, dir2);
    const MetricSet back2 = analysis::parse_metrics_csv(dir2 / "metrics.csv");
    CHECK_FALSE(back2.precision.has_value());
    CHECK_FALSE(back2.f1.has_value());
    CHECK(back2.recall.has_value());
  }

  SUBCASE("importance csv has one data row per feature") {
    const std::string text = core::slurp(dir / "importance.csv");
    std::vector<std::string> lines = core::split(text, '\n');
    while (!lines.empty() && core::trim(lines.back()).empty()) lines.pop_back();
    CHECK(lines.size() == 1 + 37);
    CHECK(lines[0] == "rank,feature,mean_drop,std_drop");
    CHECK(core::starts_with(lines[1], "1,"));
  }

  SUBCASE("svg charts are well-formed xml") {
    for (const char* name : {"metrics.svg", "history.svg", "importance.svg", "density.svg"}) {
      const std::string svg = core::slurp(dir / name);
      CAPTURE(name);
      CHECK(well_formed_xml(svg));
      CHECK(svg.find("<svg") != std::string::npos);
    }
  }

  SUBCASE("emission is byte-deterministic") {
    const std::filesystem::path dir2 = fresh_dir("cropstress-analysis-repeat");
    analysis::emit_report(report, dir2);
    for (const auto& p : written) {
      CHECK(core::slurp(p) == core::slurp(dir2 / p.filename()));
    }
  }

  SUBCASE("unwritable destination fails with an io error") {
    const std::filesystem::path file = fresh_dir("cropstress-analysis-blocker");
    core::spit(file, "plain file\n");
    try {
      analysis::emit_report(report, file / "sub");
      CHECK(false);
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::io);
    }
  }
}
