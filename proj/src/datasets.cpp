#include "ruda/datasets.hpp"

#include "ruda/errors.hpp"
#include "ruda/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>

namespace ruda::data {

std::string domain_name(Domain d) { return d == Domain::Source ? "source" : "target"; }

std::vector<int> DomainDataset::class_indices() const {
  std::vector<int> out(static_cast<std::size_t>(labels.rows()));
  for (Eigen::Index i = 0; i < labels.rows(); ++i) {
    Eigen::Index arg = 0;
    labels.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

std::vector<Eigen::Index> DomainDataset::class_counts() const {
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(labels.cols()), 0);
  for (int c : class_indices()) ++counts[static_cast<std::size_t>(c)];
  return counts;
}

void DomainDataset::validate() const {
  if (features.rows() < 1) throw ContractError("dataset must contain at least one sample");
  if (features.rows() != labels.rows()) throw ContractError("features and labels differ in length");
  for (Eigen::Index i = 0; i < labels.rows(); ++i) {
    const auto row = labels.row(i);
    const bool binary = ((row.array() == 0.0) || (row.array() == 1.0)).all();
    if (!binary || row.sum() != 1.0) throw ContractError("label row is not one-hot");
  }
  if (class_prior.size() != labels.cols() || std::abs(class_prior.sum() - 1.0) > 1e-12) {
    throw ContractError("class prior must have one entry per class and sum to 1");
  }
}

Matrix one_hot(const std::vector<int>& classes, Eigen::Index class_count) {
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(classes.size()), class_count);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= class_count) {
      throw ContractError("class index " + std::to_string(classes[i]) + " out of range");
    }
    out(static_cast<Eigen::Index>(i), classes[i]) = 1.0;
  }
  return out;
}

Vector empirical_prior(const Matrix& labels) {
  Vector prior = labels.colwise().sum().transpose();
  return prior / prior.sum();
}

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t id) { return derived_stream(seed, id); }

void check_priors(const std::vector<double>& priors, const char* which) {
  if (priors.size() != 2) throw ContractError(std::string(which) + " priors must have 2 entries");
  for (double p : priors) {
    if (!(p >= 0.0)) throw ContractError(std::string(which) + " priors must be nonnegative");
  }
  if (std::abs(priors[0] + priors[1] - 1.0) > 1e-9) {
    throw ContractError(std::string(which) + " priors must sum to 1");
  }
}

// Largest-remainder apportionment: counts sum to n and track n * priors.
std::vector<Eigen::Index> stratified_counts(Eigen::Index n, const std::vector<double>& priors) {
  std::vector<Eigen::Index> counts(priors.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  Eigen::Index assigned = 0;
  for (std::size_t c = 0; c < priors.size(); ++c) {
    const double exact = static_cast<double>(n) * priors[c];
    counts[c] = static_cast<Eigen::Index>(std::floor(exact + 1e-9));
    assigned += counts[c];
    remainders.emplace_back(exact - static_cast<double>(counts[c]), c);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];
  return counts;
}

DomainDataset make_moons(Eigen::Index n, const std::vector<double>& priors, double noise_sd,
                         double rotation_deg, Domain domain, std::mt19937_64 rng) {
  const auto counts = stratified_counts(n, priors);
  std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
  std::normal_distribution<double> noise(0.0, 1.0);
  const double theta = rotation_deg * std::numbers::pi / 180.0;
  const double ct = std::cos(theta), st = std::sin(theta);

  DomainDataset ds;
  ds.domain = domain;
  ds.features.resize(n, 2);
  std::vector<int> classes;
  classes.reserve(static_cast<std::size_t>(n));
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) {
      ds.warnings.push_back("class " + std::to_string(c) + " has no samples in the " +
                            domain_name(domain) + " domain");
    }
    for (Eigen::Index k = 0; k < counts[c]; ++k, ++row) {
      const double t = angle(rng);
      double x = c == 0 ? std::cos(t) : 1.0 - std::cos(t);
      double y = c == 0 ? std::sin(t) : 0.5 - std::sin(t);
      if (noise_sd > 0.0) {
        x += noise_sd * noise(rng);
        y += noise_sd * noise(rng);
      }
      if (rotation_deg != 0.0) {
        const double dx = x - kMoonsCentreX, dy = y - kMoonsCentreY;
        x = kMoonsCentreX + ct * dx - st * dy;
        y = kMoonsCentreY + st * dx + ct * dy;
      }
      ds.features(row, 0) = x;
      ds.features(row, 1) = y;
      classes.push_back(static_cast<int>(c));
    }
  }
  ds.labels = one_hot(classes, 2);
  ds.class_prior = empirical_prior(ds.labels);
  ds.provenance = "two_moons " + domain_name(domain) + " n=" + std::to_string(n) +
                  " rotation_deg=" + std::to_string(rotation_deg);
  return ds;
}

}  // namespace

std::pair<DomainDataset, DomainDataset> gen_two_moons(const TwoMoonsSpec& spec) {
  if (spec.n_per_domain < 1) throw ContractError("two_moons: n_per_domain must be >= 1");
  if (!(spec.noise_sd >= 0.0)) throw ContractError("two_moons: noise_sd must be >= 0");
  check_priors(spec.source_priors, "source");
  check_priors(spec.target_priors, "target");
  auto src = make_moons(spec.n_per_domain, spec.source_priors, spec.noise_sd, 0.0, Domain::Source,
                        stream(spec.seed, 1));
  auto tgt = make_moons(spec.n_per_domain, spec.target_priors, spec.noise_sd,
                        spec.target_rotation_deg, Domain::Target, stream(spec.seed, 2));
  return {std::move(src), std::move(tgt)};
}

void ShiftSpec::validate(Eigen::Index class_count) const {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw ContractError("shift: keep fraction must lie in (0, 1]");
  }
  if (classes.empty()) throw ContractError("shift: affected class set is empty");
  for (int c : classes) {
    if (c < 0 || c >= class_count) {
      throw ContractError("shift: class " + std::to_string(c) + " does not exist");
    }
  }
}

DomainDataset subsample_label_shift(const DomainDataset& ds, const ShiftSpec& spec,
                                    std::uint64_t seed) {
  spec.validate(ds.class_count());
  const auto classes = ds.class_indices();
  std::vector<bool> affected(static_cast<std::size_t>(ds.class_count()), false);
  for (int c : spec.classes) affected[static_cast<std::size_t>(c)] = true;

  std::vector<bool> keep(classes.size(), true);
  auto rng = stream(seed, 3);
  for (Eigen::Index c = 0; c < ds.class_count(); ++c) {
    if (!affected[static_cast<std::size_t>(c)]) continue;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (classes[i] == c) members.push_back(i);
    }
    // The epsilon keeps e.g. 0.1 * 100 from rounding up to 11.
    const auto target = static_cast<std::size_t>(
        std::ceil(spec.keep_fraction * static_cast<double>(members.size()) - 1e-9));
    if (target == 0) {
      throw DegenerateDataError("shift: class " + std::to_string(c) + " would be empty");
    }
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t k = target; k < members.size(); ++k) keep[members[k]] = false;
  }

  const auto kept = static_cast<Eigen::Index>(std::count(keep.begin(), keep.end(), true));
  DomainDataset out;
  out.domain = ds.domain;
  out.features.resize(kept, ds.feature_width());
  out.labels.resize(kept, ds.class_count());
  Eigen::Index row = 0;
  for (std::size_t i = 0; i < keep.size(); ++i) {
    if (!keep[i]) continue;
    out.features.row(row) = ds.features.row(static_cast<Eigen::Index>(i));
    out.labels.row(row) = ds.labels.row(static_cast<Eigen::Index>(i));
    ++row;
  }
  out.class_prior = empirical_prior(out.labels);
  out.provenance = ds.provenance + " | label shift keep=" + std::to_string(spec.keep_fraction);
  out.warnings = ds.warnings;
  return out;
}

BatchIterator::BatchIterator(const DomainDataset& ds, Eigen::Index batch_size, std::uint64_t seed,
                             std::optional<std::size_t> epochs)
    : ds_(&ds), batch_size_(batch_size), seed_(seed), epochs_(epochs) {
  if (batch_size < 1 || batch_size > ds.size()) {
    throw ContractError("batch size " + std::to_string(batch_size) + " must lie in [1, " +
                        std::to_string(ds.size()) + "]");
  }
  reshuffle();
}

std::size_t BatchIterator::batches_per_epoch() const {
  return static_cast<std::size_t>(ds_->size() / batch_size_);
}

void BatchIterator::reshuffle() {
  order_.resize(static_cast<std::size_t>(ds_->size()));
  std::iota(order_.begin(), order_.end(), Eigen::Index{0});
  auto rng = stream(seed_, 1000 + epoch_);
  std::shuffle(order_.begin(), order_.end(), rng);
  cursor_ = 0;
}

std::optional<Batch> BatchIterator::next() {
  if (epochs_ && epoch_ >= *epochs_) return std::nullopt;
  if (cursor_ + static_cast<std::size_t>(batch_size_) > order_.size()) {
    ++epoch_;
    if (epochs_ && epoch_ >= *epochs_) return std::nullopt;
    reshuffle();
  }
  Batch b;
  b.features.resize(batch_size_, ds_->feature_width());
  b.labels.resize(batch_size_, ds_->class_count());
  for (Eigen::Index k = 0; k < batch_size_; ++k) {
    const Eigen::Index i = order_[cursor_ + static_cast<std::size_t>(k)];
    b.features.row(k) = ds_->features.row(i);
    b.labels.row(k) = ds_->labels.row(i);
    b.indices.push_back(i);
  }
  cursor_ += static_cast<std::size_t>(batch_size_);
  return b;
}

Matrix mean_pool(const Matrix& image, Eigen::Index factor) {
  if (factor < 1 || image.rows() % factor != 0 || image.cols() % factor != 0) {
    throw DimensionError("mean_pool: factor must divide the image size");
  }
  Matrix out(image.rows() / factor, image.cols() / factor);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      out(r, c) = image.block(r * factor, c * factor, factor, factor).mean();
    }
  }
  return out;
}

DomainDataset dataset_from_idx(const IdxTensor& images, const IdxTensor& labels, Domain domain,
                               Eigen::Index class_count, Eigen::Index pool) {
  if (images.magic != kIdxImageMagic) throw FormatError("expected an IDX image tensor");
  if (labels.magic != kIdxLabelMagic) throw FormatError("expected an IDX label tensor");
  const auto n = static_cast<Eigen::Index>(images.dims[0]);
  const auto h = static_cast<Eigen::Index>(images.dims[1]);
  const auto w = static_cast<Eigen::Index>(images.dims[2]);
  if (static_cast<Eigen::Index>(labels.dims[0]) != n) {
    throw DimensionError("IDX image and label counts differ");
  }
  if (pool < 1 || h % pool != 0 || w % pool != 0) {
    throw DimensionError("IDX pooling factor must divide the image size");
  }
  const Eigen::Index ph = h / pool, pw = w / pool;
  DomainDataset ds;
  ds.domain = domain;
  ds.features.resize(n, ph * pw);
  std::vector<int> classes;
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix img(h, w);
    for (Eigen::Index r = 0; r < h; ++r) {
      for (Eigen::Index c = 0; c < w; ++c) {
        img(r, c) = images.payload[static_cast<std::size_t>((i * h + r) * w + c)] / 255.0;
      }
    }
    const Matrix pooled = pool == 1 ? img : mean_pool(img, pool);
    ds.features.row(i) = Eigen::Map<const Eigen::RowVectorXd>(pooled.data(), ph * pw);
    classes.push_back(labels.payload[static_cast<std::size_t>(i)]);
  }
  ds.labels = one_hot(classes, class_count);
  ds.class_prior = empirical_prior(ds.labels);
  ds.provenance = "idx " + std::to_string(n) + "x" + std::to_string(h) + "x" + std::to_string(w) +
                  " pool=" + std::to_string(pool);
  return ds;
}

DomainDataset load_idx_dataset(const std::filesystem::path& images,
                               const std::filesystem::path& labels, Domain domain,
                               Eigen::Index class_count, Eigen::Index pool) {
  auto ds = dataset_from_idx(read_idx_file(images), read_idx_file(labels), domain, class_count, pool);
  ds.provenance += " from " + images.string();
  return ds;
}

void write_csv(std::ostream& out, const std::vector<const DomainDataset*>& parts) {
  if (parts.empty()) return;
  const auto d = parts.front()->feature_width();
  for (Eigen::Index j = 0; j < d; ++j) out << 'x' << j << ',';
  out << "label,domain\n";
  out.precision(17);
  for (const auto* part : parts) {
    if (part->feature_width() != d) throw DimensionError("CSV parts differ in feature width");
    const auto classes = part->class_indices();
    for (Eigen::Index i = 0; i < part->size(); ++i) {
      for (Eigen::Index j = 0; j < d; ++j) out << part->features(i, j) << ',';
      out << classes[static_cast<std::size_t>(i)] << ',' << domain_name(part->domain) << '\n';
    }
  }
}

}  // namespace ruda::data
