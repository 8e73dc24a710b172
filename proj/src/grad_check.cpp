#include "ruda/grad_check.hpp"

#include "ruda/errors.hpp"
#include "ruda/losses.hpp"
#include "ruda/nn.hpp"
#include "ruda/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace ruda::gradcheck {

namespace {

enum class Adversary { Domain, LabelDomain, Conditional };

const char* adversary_name(Adversary a) {
  switch (a) {
    case Adversary::Domain: return "domain";
    case Adversary::LabelDomain: return "label-domain";
    case Adversary::Conditional: return "conditional";
  }
  return "?";
}

struct Graph {
  Adversary adversary = Adversary::Domain;
  nn::MlpSpec phi, cls, disc;
  nn::MlpParams phi_p, cls_p, disc_p;
  Matrix xs, xt, ys;
  Vector w;
  Matrix gs_fixed, gt_fixed;  // detached pseudo-labels, taken at the base point
  double strength = 1.0;
  bool with_entropy = false;
};

struct Losses {
  ad::Var cls;  // reaches phi and the classifier
  ad::Var adv;  // reaches the discriminator, and phi through the reversal
};

Eigen::Index draw(std::mt19937_64& rng, Eigen::Index lo, Eigen::Index hi) {
  return std::uniform_int_distribution<Eigen::Index>(lo, hi)(rng);
}

Matrix gaussian(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> n(0.0, 1.0);
  return Matrix::NullaryExpr(r, c, [&] { return n(rng); });
}

Graph make_graph(std::uint64_t seed, int index) {
  auto rng = derived_stream(seed, static_cast<std::uint64_t>(index));
  Graph g;
  g.adversary = static_cast<Adversary>(index % 3);
  const Eigen::Index d_in = draw(rng, 2, 4), hidden = draw(rng, 3, 6), rep = draw(rng, 2, 4);
  const Eigen::Index classes = draw(rng, 2, 3), n = draw(rng, 3, 6);
  g.phi = {{d_in, hidden, rep}, nn::Head::Linear, rng()};
  g.cls = {{rep, classes}, nn::Head::Softmax, rng()};
  switch (g.adversary) {
    case Adversary::Domain: g.disc = {{rep, hidden, 1}, nn::Head::Linear, rng()}; break;
    case Adversary::LabelDomain: g.disc = {{rep, hidden, classes}, nn::Head::Linear, rng()}; break;
    case Adversary::Conditional: g.disc = {{rep * classes, hidden, 1}, nn::Head::Linear, rng()}; break;
  }
  g.phi_p = nn::init_mlp(g.phi);
  g.cls_p = nn::init_mlp(g.cls);
  g.disc_p = nn::init_mlp(g.disc);
  // Nonzero biases so the bias gradients are exercised too.
  for (auto* p : {&g.phi_p, &g.cls_p, &g.disc_p}) {
    for (auto& layer : p->layers) layer.bias = 0.1 * gaussian(rng, 1, layer.bias.cols());
  }
  g.xs = gaussian(rng, n, d_in);
  g.xt = gaussian(rng, n, d_in);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (auto& c : labels) c = static_cast<int>(draw(rng, 0, classes - 1));
  Matrix ys = Matrix::Zero(n, classes);
  for (Eigen::Index i = 0; i < n; ++i) ys(i, labels[static_cast<std::size_t>(i)]) = 1.0;
  g.ys = ys;
  g.w = losses::renormalize_weights(
      Vector::NullaryExpr(n, [&] { return std::uniform_real_distribution<double>(0.2, 2.0)(rng); }));
  g.strength = std::uniform_real_distribution<double>(0.1, 1.5)(rng);
  g.with_entropy = index % 2 == 1;
  g.gs_fixed = nn::predict(g.cls, g.cls_p, nn::predict(g.phi, g.phi_p, g.xs));
  g.gt_fixed = nn::predict(g.cls, g.cls_p, nn::predict(g.phi, g.phi_p, g.xt));
  return g;
}

Losses build(ad::Tape& tape, const Graph& g, const nn::MlpParams& phi_p, const nn::MlpParams& cls_p,
             const nn::MlpParams& disc_p, nn::BoundMlp* phi_b, nn::BoundMlp* cls_b,
             nn::BoundMlp* disc_b) {
  *phi_b = nn::bind(tape, phi_p);
  *cls_b = nn::bind(tape, cls_p);
  *disc_b = nn::bind(tape, disc_p);
  const ad::Var zs = nn::forward(g.phi, *phi_b, tape.leaf(g.xs));
  const ad::Var zt = nn::forward(g.phi, *phi_b, tape.leaf(g.xt));
  const ad::Var gs = nn::forward(g.cls, *cls_b, zs);
  const ad::Var gt = nn::forward(g.cls, *cls_b, zt);
  ad::Var cls = losses::loss_cls(gs, g.ys, g.w);
  if (g.with_entropy) cls = cls + 0.1 * losses::entropy_regularizer(gt);

  const ad::Var rs = ad::gradient_reversal(zs, g.strength);
  const ad::Var rt = ad::gradient_reversal(zt, g.strength);
  ad::Var adv;
  switch (g.adversary) {
    case Adversary::Domain:
      adv = losses::loss_inv_weighted(ad::sigmoid(nn::forward(g.disc, *disc_b, rs)),
                                      ad::sigmoid(nn::forward(g.disc, *disc_b, rt)), g.w);
      break;
    case Adversary::LabelDomain:
      adv = losses::loss_tsf(ad::sigmoid(nn::forward(g.disc, *disc_b, rs)),
                             ad::sigmoid(nn::forward(g.disc, *disc_b, rt)), g.gs_fixed, g.gt_fixed,
                             g.w);
      break;
    case Adversary::Conditional: {
      const ad::Var fs = losses::cdan_feature(tape.leaf(g.gs_fixed), rs);
      const ad::Var ft = losses::cdan_feature(tape.leaf(g.gt_fixed), rt);
      adv = losses::loss_inv_weighted(ad::sigmoid(nn::forward(g.disc, *disc_b, fs)),
                                      ad::sigmoid(nn::forward(g.disc, *disc_b, ft)), g.w);
      break;
    }
  }
  return {cls, adv};
}

// Each parameter group sees its own objective: the reversal turns the
// adversarial term into -strength * adv for phi, the classifier only sees the
// classification term, and the discriminator only the adversarial one.
double objective(const Graph& g, const nn::MlpParams& phi_p, const nn::MlpParams& cls_p,
                 const nn::MlpParams& disc_p, int group) {
  ad::Tape tape;
  nn::BoundMlp a, b, c;
  const Losses l = build(tape, g, phi_p, cls_p, disc_p, &a, &b, &c);
  switch (group) {
    case 0: return l.cls.scalar() - g.strength * l.adv.scalar();
    case 1: return l.cls.scalar();
    default: return l.adv.scalar();
  }
}

}  // namespace

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
  return std::abs(analytic - numeric) / denom;
}

Report run(const Options& opts) {
  if (opts.graphs < 1) throw ContractError("grad-check needs at least one graph");
  if (!(opts.step > 0.0)) throw ContractError("grad-check step must be positive");
  Report report;
  for (int k = 0; k < opts.graphs; ++k) {
    const Graph g = make_graph(opts.seed, k);
    ad::Tape tape;
    nn::BoundMlp phi_b, cls_b, disc_b;
    const Losses l = build(tape, g, g.phi_p, g.cls_p, g.disc_p, &phi_b, &cls_b, &disc_b);
    tape.backward(l.cls + l.adv);
    const nn::MlpParams analytic[3] = {nn::gradients(phi_b), nn::gradients(cls_b),
                                       nn::gradients(disc_b)};

    GraphResult res;
    res.index = k;
    res.kind = adversary_name(g.adversary);
    for (int group = 0; group < 3; ++group) {
      nn::MlpParams params[3] = {g.phi_p, g.cls_p, g.disc_p};
      auto& target = params[group];
      for (std::size_t li = 0; li < target.layers.size(); ++li) {
        for (int which = 0; which < 2; ++which) {
          Matrix& m = which == 0 ? target.layers[li].weight : target.layers[li].bias;
          const Matrix& grad = which == 0 ? analytic[group].layers[li].weight
                                          : analytic[group].layers[li].bias;
          for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double orig = m.data()[i];
            m.data()[i] = orig + opts.step;
            const double up = objective(g, params[0], params[1], params[2], group);
            m.data()[i] = orig - opts.step;
            const double down = objective(g, params[0], params[1], params[2], group);
            m.data()[i] = orig;
            const double numeric = (up - down) / (2.0 * opts.step);
            res.max_rel_error = std::max(res.max_rel_error, relative_error(grad.data()[i], numeric));
            ++res.parameters;
          }
        }
      }
    }
    report.max_rel_error = std::max(report.max_rel_error, res.max_rel_error);
    report.graphs.push_back(res);
  }
  return report;
}

}  // namespace ruda::gradcheck
