#include "ruda/trainer.hpp"

#include "ruda/errors.hpp"
#include "ruda/losses.hpp"
#include "ruda/rng.hpp"

#include <cmath>
#include <exception>
#include <mutex>
#include <thread>

namespace ruda::train {

namespace {

// Stream ids; each component owns its generator so that enabling one does not
// perturb the others.
enum Stream : std::uint64_t {
  kPhiInit = 11,
  kClsInit = 12,
  kDiscInit = 13,
  kLabelDiscInit = 14,
  kCondDiscInit = 15,
  kSourceBatches = 21,
  kTargetBatches = 22,
};

std::vector<Eigen::Index> widths(Eigen::Index in, const std::vector<Eigen::Index>& hidden,
                                 Eigen::Index out) {
  std::vector<Eigen::Index> w{in};
  w.insert(w.end(), hidden.begin(), hidden.end());
  w.push_back(out);
  return w;
}

bool uses_label_discriminator(MethodKind m) { return m == MethodKind::RUDA || m == MethodKind::RUDA_W; }
bool uses_conditional_discriminator(MethodKind m) { return m == MethodKind::CDAN || m == MethodKind::CDAN_W; }

class Trainer {
 public:
  Trainer(const ExperimentConfig& cfg, const data::DomainDataset& source,
          const data::DomainDataset& target, std::uint64_t seed)
      : cfg_(cfg),
        source_(source),
        target_(target),
        src_batches_(source, cfg.batch_size, derived_seed(seed, kSourceBatches)),
        tgt_batches_(target, cfg.batch_size, derived_seed(seed, kTargetBatches)),
        opt_phi_(cfg.optimizer.momentum, cfg.optimizer.weight_decay),
        opt_cls_(cfg.optimizer.momentum, cfg.optimizer.weight_decay),
        opt_disc_(cfg.optimizer.momentum, cfg.optimizer.weight_decay),
        opt_label_disc_(cfg.optimizer.momentum, cfg.optimizer.weight_decay),
        opt_cond_disc_(cfg.optimizer.momentum, cfg.optimizer.weight_decay) {
    if (source.feature_width() != target.feature_width() ||
        source.class_count() != target.class_count()) {
      throw DimensionError("source and target datasets differ in feature width or class count");
    }
    const Eigen::Index d_in = source.feature_width();
    const Eigen::Index classes = source.class_count();
    const auto& net = cfg.networks;
    const std::vector<Eigen::Index> phi_hidden(net.phi.begin(), net.phi.end() - 1);
    const Eigen::Index rep = net.phi.back();

    model_.phi_spec = {widths(d_in, phi_hidden, rep), nn::Head::Linear, derived_seed(seed, kPhiInit)};
    model_.cls_spec = {widths(rep, net.classifier, classes), nn::Head::Softmax,
                       derived_seed(seed, kClsInit)};
    disc_spec_ = {widths(rep, net.discriminator, 1), nn::Head::Linear, derived_seed(seed, kDiscInit)};
    label_disc_spec_ = {widths(rep, net.label_discriminator, classes), nn::Head::Linear,
                        derived_seed(seed, kLabelDiscInit)};
    cond_disc_spec_ = {widths(rep * classes, net.discriminator, 1), nn::Head::Linear,
                       derived_seed(seed, kCondDiscInit)};
    model_.phi = nn::init_mlp(model_.phi_spec);
    model_.cls = nn::init_mlp(model_.cls_spec);
    disc_ = nn::init_mlp(disc_spec_);
    label_disc_ = nn::init_mlp(label_disc_spec_);
    cond_disc_ = nn::init_mlp(cond_disc_spec_);
  }

  SeedRun run(std::uint64_t seed) {
    SeedRun out;
    out.seed = seed;
    const auto total = static_cast<double>(cfg_.iterations);
    for (std::size_t t = 0; t < cfg_.iterations; ++t) {
      iteration_ = t;
      const double p = static_cast<double>(t) / total;
      StepRecord rec = step(p);
      if ((t + 1) % cfg_.log_interval == 0) {
        rec.iteration = t + 1;
        rec.acc_src = evaluate(model_, source_);
        rec.acc_tgt = evaluate(model_, target_);
        out.records.push_back(rec);
      }
    }
    out.final_acc_src = evaluate(model_, source_);
    out.final_acc_tgt = evaluate(model_, target_);
    out.model = model_;
    return out;
  }

 private:
  void check(double value, const char* what) const {
    if (!std::isfinite(value)) {
      throw NumericalFailure("iteration " + std::to_string(iteration_ + 1) + ": " + what +
                             " is not finite (" + std::to_string(value) + ")");
    }
  }

  void update(nn::SgdMomentum& opt, nn::MlpParams& params, const nn::BoundMlp& bound, double lr,
              const char* what) {
    try {
      opt.step(params, nn::gradients(bound), lr);
    } catch (const PoisonedUpdateError& e) {
      throw NumericalFailure("iteration " + std::to_string(iteration_ + 1) + ": " + what +
                             " update aborted: " + e.what());
    }
  }

  static ad::Var probs(const nn::MlpSpec& spec, const nn::BoundMlp& b, ad::Var x) {
    return ad::sigmoid(nn::forward(spec, b, x));
  }

  StepRecord step(double p) {
    const MethodKind method = cfg_.method;
    const double lambda = cfg_.schedule.lambda(p);
    const double tau = cfg_.schedule.tau(p);
    const double lr = cfg_.schedule.lr(p);
    StepRecord rec;
    rec.lambda = lambda;
    rec.tau = tau;

    const data::Batch bs = *src_batches_.next();
    const data::Batch bt = *tgt_batches_.next();
    const Matrix zs0 = nn::predict(model_.phi_spec, model_.phi, bs.features);
    const Matrix zt0 = nn::predict(model_.phi_spec, model_.phi, bt.features);

    // d: descend L_INV on detached representations.
    if (uses_domain_discriminator(method)) {
      ad::Tape tape;
      const auto b = nn::bind(tape, disc_);
      const ad::Var loss = losses::loss_inv(probs(disc_spec_, b, tape.leaf(zs0)),
                                            probs(disc_spec_, b, tape.leaf(zt0)));
      rec.loss_inv = loss.scalar();
      check(rec.loss_inv, "loss_inv");
      tape.backward(loss);
      update(opt_disc_, disc_, b, lr, "domain discriminator");
    }

    Vector w = Vector::Ones(bs.features.rows());
    if (is_weighted(method)) {
      const Matrix logits = nn::predict(disc_spec_, disc_, zs0);
      w = losses::batch_weights({losses::WeightKind::Relaxed, tau, true}, logits.col(0));
    }
    rec.w_mean = w.mean();
    rec.w_min = w.minCoeff();
    rec.w_max = w.maxCoeff();
    check(rec.w_mean, "weight mean");

    // Pseudo-labels enter the adversarial losses as constants.
    const Matrix gs0 = nn::predict(model_.cls_spec, model_.cls, zs0);
    const Matrix gt0 = nn::predict(model_.cls_spec, model_.cls, zt0);

    if (uses_label_discriminator(method)) {
      ad::Tape tape;
      const auto b = nn::bind(tape, label_disc_);
      const ad::Var loss = losses::loss_tsf(probs(label_disc_spec_, b, tape.leaf(zs0)),
                                            probs(label_disc_spec_, b, tape.leaf(zt0)), gs0, gt0, w);
      rec.loss_tsf = loss.scalar();
      check(rec.loss_tsf, "loss_tsf");
      tape.backward(loss);
      update(opt_label_disc_, label_disc_, b, lr, "label-domain discriminator");
    }
    if (uses_conditional_discriminator(method)) {
      ad::Tape tape;
      const auto b = nn::bind(tape, cond_disc_);
      const ad::Var fs = losses::cdan_feature(tape.leaf(gs0), tape.leaf(zs0));
      const ad::Var ft = losses::cdan_feature(tape.leaf(gt0), tape.leaf(zt0));
      const ad::Var loss = losses::loss_inv_weighted(probs(cond_disc_spec_, b, fs),
                                                     probs(cond_disc_spec_, b, ft), w);
      rec.loss_tsf = loss.scalar();
      check(rec.loss_tsf, "conditional discriminator loss");
      tape.backward(loss);
      update(opt_cond_disc_, cond_disc_, b, lr, "conditional discriminator");
    }

    // phi: descend L_c, ascend the adversarial loss through the reversal node.
    {
      ad::Tape tape;
      const auto bphi = nn::bind(tape, model_.phi);
      const auto bcls = nn::bind(tape, model_.cls);
      const ad::Var zs = nn::forward(model_.phi_spec, bphi, tape.leaf(bs.features));
      const ad::Var gs = nn::forward(model_.cls_spec, bcls, zs);
      const ad::Var lc = losses::loss_cls(gs, bs.labels, w);
      rec.loss_c = lc.scalar();
      check(rec.loss_c, "loss_c");
      ad::Var total = lc;
      if (is_adversarial(method)) {
        const ad::Var zt = nn::forward(model_.phi_spec, bphi, tape.leaf(bt.features));
        const ad::Var rs = ad::gradient_reversal(zs, lambda);
        const ad::Var rt = ad::gradient_reversal(zt, lambda);
        const bool reverse_inv = method == MethodKind::DANN ||
                                 (uses_label_discriminator(method) && cfg_.reverse_inv_into_phi);
        if (reverse_inv) {
          const auto bd = nn::bind(tape, disc_);
          total = total + losses::loss_inv(probs(disc_spec_, bd, rs), probs(disc_spec_, bd, rt));
        }
        if (uses_label_discriminator(method)) {
          const auto bdd = nn::bind(tape, label_disc_);
          total = total + losses::loss_tsf(probs(label_disc_spec_, bdd, rs),
                                           probs(label_disc_spec_, bdd, rt), gs0, gt0, w);
        }
        if (uses_conditional_discriminator(method)) {
          const auto bc = nn::bind(tape, cond_disc_);
          const ad::Var fs = losses::cdan_feature(tape.leaf(gs0), rs);
          const ad::Var ft = losses::cdan_feature(tape.leaf(gt0), rt);
          total = total + losses::loss_inv_weighted(probs(cond_disc_spec_, bc, fs),
                                                    probs(cond_disc_spec_, bc, ft), w);
        }
        check(total.scalar(), "representation objective");
      }
      tape.backward(total);
      update(opt_phi_, model_.phi, bphi, lr, "representation");
    }

    // g: descend L_c on representations from the updated phi.
    {
      const Matrix zs1 = nn::predict(model_.phi_spec, model_.phi, bs.features);
      ad::Tape tape;
      const auto bcls = nn::bind(tape, model_.cls);
      const ad::Var lc =
          losses::loss_cls(nn::forward(model_.cls_spec, bcls, tape.leaf(zs1)), bs.labels, w);
      check(lc.scalar(), "classifier loss");
      tape.backward(lc);
      update(opt_cls_, model_.cls, bcls, lr, "classifier");
    }
    return rec;
  }

  const ExperimentConfig& cfg_;
  const data::DomainDataset& source_;
  const data::DomainDataset& target_;
  data::BatchIterator src_batches_, tgt_batches_;
  Model model_;
  nn::MlpSpec disc_spec_, label_disc_spec_, cond_disc_spec_;
  nn::MlpParams disc_, label_disc_, cond_disc_;
  nn::SgdMomentum opt_phi_, opt_cls_, opt_disc_, opt_label_disc_, opt_cond_disc_;
  std::size_t iteration_ = 0;
};

}  // namespace

Matrix Model::predict_proba(const Matrix& x) const {
  return nn::predict(cls_spec, cls, nn::predict(phi_spec, phi, x));
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(static_cast<std::size_t>(m.rows()), 0);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < m.cols(); ++c) {
      if (m(i, c) > m(i, best)) best = c;
    }
    out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

double evaluate(const Model& model, const data::DomainDataset& ds) {
  if (ds.size() == 0) throw DegenerateDataError("evaluate: empty dataset");
  const auto predicted = argmax_rows(model.predict_proba(ds.features));
  const auto truth = ds.class_indices();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

SeedRun run_seed(const ExperimentConfig& cfg, const data::DomainDataset& source,
                 const data::DomainDataset& target, std::uint64_t seed) {
  cfg.validate();
  Trainer trainer(cfg, source, target, seed);
  return trainer.run(seed);
}

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto [source, target] = build_datasets(cfg.dataset);
  RunReport report;
  report.method = method_name(cfg.method);
  report.config_hash = config_hash(cfg);
  report.runs.resize(cfg.seeds.size());

  const std::size_t workers = std::min<std::size_t>(cfg.threads, cfg.seeds.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
      report.runs[i] = run_seed(cfg, source, target, cfg.seeds[i]);
    }
  } else {
    std::vector<std::exception_ptr> errors(cfg.seeds.size());
    std::mutex mu;
    std::size_t next = 0;
    std::vector<std::thread> pool;
    for (std::size_t k = 0; k < workers; ++k) {
      pool.emplace_back([&] {
        for (;;) {
          std::size_t i;
          {
            std::lock_guard<std::mutex> lock(mu);
            if (next >= cfg.seeds.size()) return;
            i = next++;
          }
          try {
            report.runs[i] = run_seed(cfg, source, target, cfg.seeds[i]);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
    for (auto& th : pool) th.join();
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  double sum = 0.0;
  for (const auto& r : report.runs) sum += r.final_acc_tgt;
  const auto n = static_cast<double>(report.runs.size());
  report.mean_acc_tgt = sum / n;
  if (report.runs.size() > 1) {
    double ss = 0.0;
    for (const auto& r : report.runs) ss += (r.final_acc_tgt - report.mean_acc_tgt) * (r.final_acc_tgt - report.mean_acc_tgt);
    report.sd_acc_tgt = std::sqrt(ss / (n - 1.0));
  }
  return report;
}

}  // namespace ruda::train
