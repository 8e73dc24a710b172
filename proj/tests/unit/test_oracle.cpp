#include "ruda/oracle.hpp"
#include "ruda/oracle_io.hpp"

#include "support/brute_force.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace ruda;
using namespace ruda::oracle;
using Inst = DiscreteInstance<double>;
using Fam = CriticFamily<double>;
using W = WeightTable<double>;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

const Fam kUnit{1.0, 1.0};

// Instance with shared conditionals f and marginals ps, pt.
Inst shared_conditionals(const Matrix& f, const Vector& ps, const Vector& pt) {
  return {f * ps.asDiagonal(), f * pt.asDiagonal()};
}

}  // namespace

TEST_CASE("instance validation") {
  CHECK_NOTHROW(Inst{rows({{0.5, 0.5}}), rows({{1.0, 0.0}})}.validate());
  CHECK_THROWS_AS((Inst{rows({{0.5, 0.6}}), rows({{1.0, 0.0}})}.validate()), ContractError);
  CHECK_THROWS_AS((Inst{rows({{1.5, -0.5}}), rows({{1.0, 0.0}})}.validate()), ContractError);
  CHECK_THROWS_AS((Inst{rows({{0.5, 0.5}}), rows({{1.0}})}.validate()), DimensionError);
  const Inst inst{rows({{0.25, 0.25}, {0.25, 0.25}}), rows({{0.5, 0.0}, {0.0, 0.5}})};
  W bad{Vector::Constant(2, 2.0)};
  CHECK_THROWS_AS(bad.validate(inst), ContractError);
}

TEST_CASE("labelling function") {
  const Inst det{rows({{0.3, 0.0}, {0.0, 0.7}}), rows({{0.5, 0.0}, {0.0, 0.5}})};
  const auto f = labelling_function(det, Side::Source);
  CHECK(f.table == rows({{1, 0}, {0, 1}}));
  const Inst uni{Matrix::Constant(2, 2, 0.25), Matrix::Constant(2, 2, 0.25)};
  CHECK((labelling_function(uni, Side::Target).table.array() == 0.5).all());
  const Inst holes{rows({{0.5, 0.0}, {0.5, 0.0}}), rows({{0.2, 0.3}, {0.1, 0.4}})};
  const auto g = labelling_function(holes, Side::Source);
  CHECK(g.zero_mass == std::vector<bool>{false, true});
  CHECK((g.table.col(1).array() == 0.5).all());
  std::mt19937_64 rng(1);
  for (int k = 0; k < 20; ++k) {
    const auto i = brute::random_instance(rng);
    const auto ft = labelling_function(i, Side::Target).table;
    CHECK(((ft.colwise().sum().array() - 1.0).abs() < 1e-12).all());
  }
}

TEST_CASE("inv and tsf closed forms") {
  const Inst same{rows({{0.2, 0.3}, {0.1, 0.4}}), rows({{0.2, 0.3}, {0.1, 0.4}})};
  CHECK(inv_exact(same, kUnit) == 0.0);
  CHECK(tsf_exact(same, kUnit) == 0.0);

  const Inst apart{rows({{1.0, 0.0}}), rows({{0.0, 1.0}})};
  CHECK(inv_exact(apart, kUnit) == 2.0);
  CHECK(brute::inv(apart, W::ones(2), kUnit) == 2.0);

  // Label shift with identical conditionals on a single atom.
  const Inst shift{rows({{0.9}, {0.1}}), rows({{0.5}, {0.5}})};
  CHECK(tsf_exact(shift, kUnit) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(brute::tsf(shift, W::ones(1), kUnit) == doctest::Approx(0.8).epsilon(1e-15));
  CHECK(inv_exact(shift, kUnit) == 0.0);
}

TEST_CASE("closed forms match critic enumeration") {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 60; ++k) {
    const auto inst = brute::random_instance(rng, 3, 4, 0.2);
    const auto fam = Fam::for_classes(inst.classes(), 1.0 + (k % 3) * 0.5);
    const auto w = brute::random_weights(rng, inst);
    const Matrix g = brute::random_predictions(rng, inst.classes(), inst.atoms());
    CHECK(std::abs(inv_exact(inst, fam) - brute::inv(inst, W::ones(inst.atoms()), fam)) < 1e-12);
    CHECK(std::abs(tsf_exact(inst, fam) - brute::tsf(inst, W::ones(inst.atoms()), fam)) < 1e-12);
    CHECK(std::abs(inv_weighted_exact(inst, w, fam) - brute::inv(inst, w, fam)) < 1e-12);
    CHECK(std::abs(tsf_weighted_exact(inst, w, fam) - brute::tsf(inst, w, fam)) < 1e-12);
    CHECK(std::abs(tsf_hat_exact(inst, w, g, fam) - brute::tsf_hat(inst, w, g, fam)) < 1e-12);
    CHECK(std::abs(d_fc_exact(inst, fam) - brute::d_fc(inst, fam)) < 1e-12);
  }
}

TEST_CASE("weighted terms") {
  std::mt19937_64 rng(3);
  const auto inst = brute::random_instance(rng, 2, 4);
  const auto ones = W::ones(inst.atoms());
  CHECK(inv_weighted_exact(inst, ones, kUnit) == inv_exact(inst, kUnit));
  CHECK(tsf_weighted_exact(inst, ones, kUnit) == tsf_exact(inst, kUnit));

  const Matrix f = rows({{0.7, 0.2, 0.5}, {0.3, 0.8, 0.5}});
  Vector ps(3), pt(3);
  ps << 0.5, 0.3, 0.2;
  pt << 0.1, 0.3, 0.6;
  const Inst shared = shared_conditionals(f, ps, pt);
  const auto w = optimal_weights(shared);
  CHECK(inv_weighted_exact(shared, w, kUnit) < 1e-15);
  CHECK(tsf_weighted_exact(shared, w, kUnit) < 1e-15);
  CHECK(brute::tsf(shared, w, kUnit) < 1e-15);
  const Matrix ft = labelling_function(shared, Side::Target).table;
  CHECK(tsf_hat_exact(shared, w, ft, kUnit) < 1e-15);
  // g = f_T turns the prediction-based term into the label-based one.
  const auto rw = brute::random_weights(rng, shared);
  CHECK(std::abs(tsf_hat_exact(shared, rw, ft, kUnit) - tsf_weighted_exact(shared, rw, kUnit)) < 1e-15);
}

TEST_CASE("d_fc") {
  const Inst same{rows({{0.4, 0.6}}), rows({{0.4, 0.6}})};
  CHECK(d_fc_exact(same, kUnit) == 0.0);
  const Inst apart{rows({{1.0, 0.0}}), rows({{0.0, 1.0}})};
  // Grid enumeration: f = 1, f' = -1 on the first atom gives |4 * 1 - 0|.
  CHECK(brute::d_fc(apart, kUnit) == 4.0);
  CHECK(d_fc_exact(apart, kUnit) == 4.0);
  std::mt19937_64 rng(4);
  for (int k = 0; k < 1000; ++k) {
    const auto inst = brute::random_instance(rng, 3, 5, 0.2);
    const auto fam = Fam::for_classes(inst.classes());
    CHECK(d_fc_exact(inst, fam) <= 4.0 * inv_exact(inst, fam) + 1e-12);
  }
}

TEST_CASE("risk") {
  const Inst det{rows({{0.3, 0.0}, {0.0, 0.7}}), rows({{0.5, 0.0}, {0.0, 0.5}})};
  CHECK(risk_exact(det, Side::Source, rows({{1, 0}, {0, 1}})) == 0.0);
  std::mt19937_64 rng(5);
  for (int k = 0; k < 20; ++k) {
    auto inst = brute::random_instance(rng, 2, 4);
    while (inst.classes() != 2) inst = brute::random_instance(rng, 2, 4);
    CHECK(risk_exact(inst, Side::Target, Matrix::Constant(2, inst.atoms(), 0.5)) == doctest::Approx(0.5).epsilon(1e-14));
    const Matrix ft = labelling_function(inst, Side::Target).table;
    for (int j = 0; j < 50; ++j) {
      const Matrix g = brute::random_predictions(rng, 2, inst.atoms());
      CHECK(risk_exact(inst, Side::Target, ft) <= risk_exact(inst, Side::Target, g) + 1e-15);
    }
  }
}

TEST_CASE("tsf dominates inv with unit bounds") {
  std::mt19937_64 rng(6);
  for (int k = 0; k < 500; ++k) {
    const auto inst = brute::random_instance(rng, 3, 5, 0.2);
    CHECK(tsf_exact(inst, kUnit) >= inv_exact(inst, kUnit) - 1e-15);
  }
}

TEST_CASE("merging atoms never increases inv") {
  std::mt19937_64 rng(7);
  for (int k = 0; k < 200; ++k) {
    auto inst = brute::random_instance(rng, 3, 5);
    if (inst.atoms() < 2) continue;
    std::vector<int> part(static_cast<std::size_t>(inst.atoms()));
    for (std::size_t z = 0; z < part.size(); ++z) part[z] = static_cast<int>(z);
    part.back() = 0;
    const int cells = partition_cells(part, inst.atoms());
    const Inst merged{coarsen(inst.p_source, part, cells), coarsen(inst.p_target, part, cells)};
    CHECK(inv_exact(merged, kUnit) <= inv_exact(inst, kUnit) + 1e-15);
  }
}

TEST_CASE("inv(w) = 0 forces w p_S = p_T") {
  std::mt19937_64 rng(8);
  for (int k = 0; k < 200; ++k) {
    const auto inst = brute::random_instance(rng, 3, 5);
    const auto w = optimal_weights(inst);
    REQUIRE(inv_weighted_exact(inst, w, kUnit) < 1e-12);
    const Vector gap = inst.marginal(Side::Source).cwiseProduct(w.w) - inst.marginal(Side::Target);
    CHECK(gap.cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("bounds 2 and 3") {
  const Inst same{rows({{0.2, 0.3}, {0.1, 0.4}}), rows({{0.2, 0.3}, {0.1, 0.4}})};
  const Matrix g = rows({{0.6, 0.1}, {0.4, 0.9}});
  const auto r = verify_bound2(same, g, kUnit);
  CHECK(r.holds);
  CHECK(r.invariance == 0.0);
  CHECK(r.transferability == 0.0);
  const auto r3 = verify_bound3(same, W::ones(2), g, kUnit);
  CHECK(r3.lhs == r.lhs);
  CHECK(r3.rhs == r.rhs);

  // Noiseless shared-conditional instance, g = f_T: lhs = 0 and rhs small.
  const Matrix f = rows({{1, 0, 1}, {0, 1, 0}});
  Vector ps(3), pt(3);
  ps << 0.3, 0.3, 0.4;
  pt << 0.32, 0.3, 0.38;
  const Inst probe = shared_conditionals(f, ps, pt);
  const auto tight = verify_bound2(probe, f, Fam::for_classes(2));
  CHECK(tight.holds);
  CHECK(tight.lhs == 0.0);
  CHECK(tight.source_risk == 0.0);
  CHECK(tight.rhs == doctest::Approx(6.0 * tight.invariance + 2.0 * tight.transferability));

  std::mt19937_64 rng(9);
  for (int k = 0; k < 200; ++k) {
    const auto inst = brute::random_instance(rng, 3, 5, 0.2);
    const auto fam = Fam::for_classes(inst.classes());
    const Matrix gk = brute::random_predictions(rng, inst.classes(), inst.atoms());
    CHECK(verify_bound2(inst, gk, fam).holds);
    CHECK(verify_bound3(inst, brute::random_weights(rng, inst), gk, fam).holds);
  }
}

TEST_CASE("bound 4") {
  const Matrix f = rows({{1, 0, 1}, {0, 1, 0}});
  Vector ps(3), pt(3);
  ps << 0.5, 0.3, 0.2;
  pt << 0.2, 0.3, 0.5;
  const Inst noiseless = shared_conditionals(f, ps, pt);
  const auto w = W::ones(3);
  // f_{w.S} is already perfect here, so only g~ = f_T meets the condition.
  const auto r = verify_bound4(noiseless, w, f, 1e-3, Fam::for_classes(2));
  CHECK(r.precondition_met);
  CHECK(r.lhs == 0.0);
  CHECK(r.holds);

  const Inst noisy{rows({{0.2, 0.1}, {0.3, 0.4}}), rows({{0.1, 0.3}, {0.4, 0.2}})};
  const Matrix uniform = Matrix::Constant(2, 2, 0.5);
  const auto unmet = verify_bound4(noisy, W::ones(2), uniform, 0.1, Fam::for_classes(2));
  CHECK_FALSE(unmet.precondition_met);
  CHECK_FALSE(unmet.holds);

  double prev = 0.0;
  for (double beta : {0.5, 0.9, 0.99, 0.999}) {
    const auto rb = verify_bound4(noisy, W::ones(2), uniform, beta, Fam::for_classes(2));
    CHECK(rb.rhs > prev);
    prev = rb.rhs;
  }
  CHECK_THROWS_AS(verify_bound4(noisy, W::ones(2), uniform, 1.0, Fam::for_classes(2)), ContractError);
}

TEST_CASE("tightness") {
  const Inst same{rows({{0.2, 0.3}, {0.1, 0.4}}), rows({{0.2, 0.3}, {0.1, 0.4}})};
  const auto r = check_tightness(same, kUnit);
  CHECK(r.inv == 0.0);
  CHECK(r.tsf == 0.0);
  CHECK(r.joints_equal);
  CHECK(r.consistent);

  // Equal marginals, different conditionals.
  const Inst cond{rows({{0.3, 0.2}, {0.2, 0.3}}), rows({{0.2, 0.3}, {0.3, 0.2}})};
  const auto c = check_tightness(cond, kUnit);
  CHECK(c.inv == 0.0);
  CHECK(c.tsf > 0.0);
  CHECK_FALSE(c.joints_equal);
  CHECK(c.consistent);
}

TEST_CASE("weighted tightness") {
  const Matrix f = rows({{0.6, 0.2}, {0.4, 0.8}});
  Vector ps(2), pt(2);
  ps << 0.5, 0.5;
  pt << 0.25, 0.75;
  const auto r = check_tightness_weighted(shared_conditionals(f, ps, pt), kUnit);
  CHECK(r.w_star.w(0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.w_star.w(1) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(r.tsf < 1e-15);
  CHECK(r.conditionals_equal);
  CHECK(r.consistent);

  const Inst differ{rows({{0.3, 0.1}, {0.2, 0.4}}), rows({{0.1, 0.5}, {0.15, 0.25}})};
  const auto d = check_tightness_weighted(differ, kUnit);
  CHECK(d.tsf > 0.0);
  CHECK_FALSE(d.conditionals_equal);
  CHECK(d.consistent);

  const Inst off_support{rows({{0.5, 0.0}, {0.5, 0.0}}), rows({{0.25, 0.25}, {0.25, 0.25}})};
  CHECK_THROWS_AS(check_tightness_weighted(off_support, kUnit), UnboundedWeightError);
}

TEST_CASE("inductive weights") {
  const Matrix f = rows({{0.6, 0.6, 0.1, 0.1}, {0.4, 0.4, 0.9, 0.9}});
  Vector ps(4), pt(4);
  // Within each cell {0,1} and {2,3} the atom split is identical.
  ps << 0.2, 0.2, 0.3, 0.3;
  pt << 0.1, 0.1, 0.4, 0.4;
  const Inst good = shared_conditionals(f, ps, pt);

  SUBCASE("identity partition reduces to weighted tightness") {
    const auto r = check_inductive_weights(good, {0, 1, 2, 3}, kUnit);
    const auto t = check_tightness_weighted(good, kUnit);
    CHECK((r.atom_weights.w - t.w_star.w).cwiseAbs().maxCoeff() < 1e-15);
    CHECK(r.terms_zero == t.terms_zero);
  }
  SUBCASE("two cells with within-cell equality") {
    const auto r = check_inductive_weights(good, {0, 0, 1, 1}, kUnit);
    CHECK(r.cell_weights(0) == doctest::Approx(0.5));
    CHECK(r.cell_weights(1) == doctest::Approx(4.0 / 3.0));
    CHECK(r.terms_zero);
    CHECK(r.conditions_hold);
    CHECK(r.consistent);
  }
  SUBCASE("within-cell violation keeps inv positive for any cell weights") {
    Vector pt2(4);
    pt2 << 0.05, 0.15, 0.4, 0.4;
    const Inst bad = shared_conditionals(f, ps, pt2);
    const auto r = check_inductive_weights(bad, {0, 0, 1, 1}, kUnit);
    CHECK_FALSE(r.within_cell_equal);
    CHECK(r.min_inv_cell_constant > 0.0);
    CHECK_FALSE(r.terms_zero);
    CHECK(r.consistent);
    // Independent grid search over the two cell weights.
    const Vector psm = bad.marginal(Side::Source), ptm = bad.marginal(Side::Target);
    double best = INFINITY;
    for (int a = 0; a <= 400; ++a) {
      for (int b = 0; b <= 400; ++b) {
        Vector w(4);
        w << a / 100.0, a / 100.0, b / 100.0, b / 100.0;
        best = std::min(best, (ptm - psm.cwiseProduct(w)).cwiseAbs().sum());
      }
    }
    CHECK(best > 0.0);
    CHECK(r.min_inv_cell_constant <= best + 1e-12);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(check_inductive_weights(good, {0, 0, 2, 2}, kUnit), ContractError);
    CHECK_THROWS_AS(check_inductive_weights(good, {0, 0, 1}, kUnit), DimensionError);
    const Inst holes{rows({{0.5, 0.5, 0.0}}), rows({{0.2, 0.3, 0.5}})};
    CHECK_THROWS_AS(check_inductive_weights(holes, {0, 0, 1}, kUnit), UnboundedWeightError);
  }
}

TEST_CASE("minent lower bound") {
  std::mt19937_64 rng(10);
  const auto inst = [&] {
    auto i = brute::random_instance(rng, 3, 4);
    while (i.classes() < 2) i = brute::random_instance(rng, 3, 4);
    return i;
  }();
  const Eigen::Index c = inst.classes();
  const Matrix uniform = Matrix::Constant(c, inst.atoms(), 1.0 / static_cast<double>(c));
  const double alpha = static_cast<double>(c - 1) / static_cast<double>(c);
  const auto r = check_minent_bound(inst, W::ones(inst.atoms()), uniform, alpha, Fam::for_classes(c));
  CHECK(r.precondition_met);
  CHECK(r.target_entropy == doctest::Approx(std::log(static_cast<double>(c))).epsilon(1e-14));
  CHECK(r.holds);

  // eta = 1 / log((C - 1) / alpha) grows as alpha approaches (C - 1) / C,
  // reaching 1 / log C there.
  for (Eigen::Index classes : {2, 3, 5}) {
    const double top = static_cast<double>(classes - 1) / static_cast<double>(classes);
    double prev = 0.0;
    for (int k = 1; k <= 50; ++k) {
      const double eta = minent_eta(top * k / 50.0, classes);
      CHECK(eta > prev);
      prev = eta;
    }
    CHECK(prev == doctest::Approx(1.0 / std::log(static_cast<double>(classes))).epsilon(1e-14));
  }

  Matrix sharp = uniform;
  sharp.col(0).setZero();
  sharp(0, 0) = 1.0;
  const auto unmet = check_minent_bound(inst, W::ones(inst.atoms()), sharp, 0.1, Fam::for_classes(c));
  CHECK_FALSE(unmet.precondition_met);
  CHECK_THROWS_AS(check_minent_bound(inst, W::ones(inst.atoms()), uniform, 0.1, Fam{1.0, 0.5}), ContractError);
}

TEST_CASE("dann and cdan objectives") {
  const Inst same{rows({{0.2, 0.3}, {0.1, 0.4}}), rows({{0.2, 0.3}, {0.1, 0.4}})};
  const auto r = check_dann_cdan_equality(same, std::vector<int>{0, 1});
  CHECK(r.equal);
  CHECK(r.dann == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));

  std::mt19937_64 rng(11);
  for (int k = 0; k < 50; ++k) {
    const auto inst = brute::random_instance(rng, 3, 5, 0.2);
    std::vector<int> yhat(static_cast<std::size_t>(inst.atoms()));
    for (auto& y : yhat) y = static_cast<int>(rng() % static_cast<std::uint64_t>(inst.classes()));
    const auto d = check_dann_cdan_equality(inst, yhat);
    CHECK(d.difference < 1e-9);
  }

  // Different soft predictions per domain separate the atoms for CDAN.
  const Inst one_atom{rows({{0.5}, {0.5}}), rows({{0.5}, {0.5}})};
  const auto neg = check_dann_cdan_equality(one_atom, rows({{0.9}, {0.1}}), rows({{0.2}, {0.8}}));
  CHECK_FALSE(neg.equal);
  CHECK(neg.difference > 1e-3);
}

TEST_CASE("templated on the scalar type") {
  DiscreteInstance<long double> inst{MatrixX<long double>::Constant(1, 2, 0.5L),
                                     MatrixX<long double>::Constant(1, 2, 0.5L)};
  inst.p_target(0, 0) = 0.25L;
  inst.p_target(0, 1) = 0.75L;
  CHECK(inv_exact(inst, CriticFamily<long double>{1.0L, 1.0L}) == 0.5L);
}

TEST_CASE("json front end") {
  const Json doc = {{"p_source", {{0.25, 0.25}, {0.25, 0.25}}}, {"p_target", {{0.25, 0.25}, {0.25, 0.25}}}};
  const auto out = run_check("tightness", doc);
  CHECK(out.status == CheckStatus::Holds);
  CHECK(out.report["holds"] == true);
  CHECK(out.report["check"] == "tightness");
  CHECK(out.report["inputs_hash"].get<std::string>().size() == 16);
  CHECK(out.report["values"]["joints_equal"] == true);

  const auto inst = instance_from_json(doc);
  CHECK(instance_to_json(inst) == doc);
  CHECK_THROWS_AS(run_check("nope", doc), ContractError);
  CHECK_THROWS_AS(run_check("bound2", doc), ContractError);
  Json g = doc;
  g["g"] = {{0.5, 0.5}, {0.5, 0.5}};
  CHECK(run_check("bound2", g).status == CheckStatus::Holds);
  g["beta"] = 0.5;
  CHECK(run_check("bound4", g).status == CheckStatus::PreconditionUnmet);
  Json bad = doc;
  bad["p_target"] = {{0.5, 0.5}, {0.25, 0.25}};
  CHECK_THROWS_AS(run_check("tightness", bad), ContractError);
}
