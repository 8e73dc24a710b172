#pragma once

#include "ruda/idx.hpp"
#include "ruda/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace ruda::data {

enum class Domain { Source, Target };

std::string domain_name(Domain d);

/// Labelled sample set of one domain. Labels are one-hot rows; class_prior
/// holds the empirical class frequencies.
struct DomainDataset {
  Matrix features;  // [n x d]
  Matrix labels;    // [n x C], one-hot rows
  Domain domain = Domain::Source;
  Vector class_prior;
  std::string provenance;
  std::vector<std::string> warnings;

  Eigen::Index size() const { return features.rows(); }
  Eigen::Index feature_width() const { return features.cols(); }
  Eigen::Index class_count() const { return labels.cols(); }
  /// Index of the hot entry of each label row.
  std::vector<int> class_indices() const;
  std::vector<Eigen::Index> class_counts() const;

  /// Throws ContractError if the invariants (one-hot rows, prior summing to
  /// one, n >= 1, matching row counts) do not hold.
  void validate() const;
};

/// One-hot encode class indices into [n x classes].
Matrix one_hot(const std::vector<int>& classes, Eigen::Index class_count);
Vector empirical_prior(const Matrix& labels);

struct TwoMoonsSpec {
  Eigen::Index n_per_domain = 1000;
  double noise_sd = 0.1;
  std::vector<double> source_priors{0.5, 0.5};
  std::vector<double> target_priors{0.5, 0.5};
  double target_rotation_deg = 20.0;
  std::uint64_t seed = 0;
};

/// Two interleaved half circles. Class 0 lies on the upper unit half circle,
/// class 1 on the shifted lower one. Class counts follow the priors exactly;
/// the target domain is rotated about the centre of the figure.
std::pair<DomainDataset, DomainDataset> gen_two_moons(const TwoMoonsSpec& spec);

/// Centre used for the target rotation.
inline constexpr double kMoonsCentreX = 0.5;
inline constexpr double kMoonsCentreY = 0.25;

struct ShiftSpec {
  std::vector<int> classes;
  double keep_fraction = 1.0;

  void validate(Eigen::Index class_count) const;
};

/// Keeps ceil(fraction * count) uniformly chosen samples of each affected
/// class; other classes are untouched and relative order is preserved.
/// Throws DegenerateDataError if an affected class ends up empty.
DomainDataset subsample_label_shift(const DomainDataset& ds, const ShiftSpec& spec,
                                    std::uint64_t seed);

struct Batch {
  Matrix features;
  Matrix labels;
  std::vector<Eigen::Index> indices;
};

/// Seeded mini-batch stream: every epoch draws a fresh permutation determined
/// by (seed, epoch) and yields floor(n / b) batches; the ragged tail is dropped.
class BatchIterator {
 public:
  /// `epochs` = nullopt streams forever. Throws ContractError if b > n or b == 0.
  BatchIterator(const DomainDataset& ds, Eigen::Index batch_size, std::uint64_t seed,
                std::optional<std::size_t> epochs = std::nullopt);

  std::optional<Batch> next();
  std::size_t batches_per_epoch() const;
  std::size_t epoch() const { return epoch_; }

 private:
  void reshuffle();

  const DomainDataset* ds_;
  Eigen::Index batch_size_;
  std::uint64_t seed_;
  std::optional<std::size_t> epochs_;
  std::size_t epoch_ = 0;
  std::size_t cursor_ = 0;
  std::vector<Eigen::Index> order_;
};

/// Images from an IDX pair, scaled to [0, 1] and optionally mean-pooled by
/// `pool` x `pool` blocks, then flattened.
DomainDataset load_idx_dataset(const std::filesystem::path& images,
                               const std::filesystem::path& labels, Domain domain,
                               Eigen::Index class_count = 10, Eigen::Index pool = 1);

DomainDataset dataset_from_idx(const IdxTensor& images, const IdxTensor& labels, Domain domain,
                               Eigen::Index class_count = 10, Eigen::Index pool = 1);

/// Mean pooling of one row-major image by non-overlapping factor x factor blocks.
Matrix mean_pool(const Matrix& image, Eigen::Index factor);

/// Headered CSV with columns x0..x{d-1}, label, domain.
void write_csv(std::ostream& out, const std::vector<const DomainDataset*>& parts);

}  // namespace ruda::data
