#ifndef PPCA_FACES_HPP
#define PPCA_FACES_HPP

// Image corpora, contamination schemes and low-rank face reconstruction.
//
// On disk a corpus is a headerless CSV (one image per row, row-major pixels)
// plus a JSON sidecar next to it with the same stem:
//   {"n": 400, "height": 64, "width": 64, "pixel_max": 255}

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ppca/estimators.hpp"

namespace ppca::faces {

using estimators::Method;
using linalg::Index;

struct ImageCorpus {
  Index height = 0;
  Index width = 0;
  double pixel_max = 255.0;
  /// n × (height·width).
  Eigen::MatrixXd rows;

  Index n() const { return rows.rows(); }
  Index pixels() const { return height * width; }
  /// Shape and finiteness checks; with `require_range` also 0 <= v <= pixel_max.
  void validate(bool require_range) const;
};

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path);

ImageCorpus load_corpus(const std::filesystem::path& csv_path);
void save_corpus(const ImageCorpus& corpus, const std::filesystem::path& csv_path);

struct ContaminationS1 {
  ImageCorpus corpus;
  /// Sorted indices of the images that received noise.
  std::vector<Index> contaminated;
};

/// Smooth low-rank "faces": a mean image plus a few Gaussian-blob modes with
/// random weights and small pixel noise, clipped to [0, 255].
ImageCorpus synthetic_corpus(Index n, Index height, Index width, std::uint64_t seed);

/// ⌊fraction·n⌋ random images get additive t₅(0, 50 I) noise.
ContaminationS1 contaminate_s1(const ImageCorpus& corpus, double fraction, Rng& rng);

/// Appends `count` images with i.i.d. pixels uniform on {0, …, pixel_max}.
ImageCorpus contaminate_s2(const ImageCorpus& corpus, Index count, Rng& rng);

/// Mean face and an orthonormal basis of the estimated leading subspace.
struct Projection {
  Eigen::RowVectorXd mean;
  Eigen::MatrixXd basis;

  /// μ̂ + P(x − μ̂) for every row.
  ImageCorpus apply(const ImageCorpus& corpus) const;
};

Projection fit_projection(const ImageCorpus& corpus, Method method, Index r, std::uint64_t seed);

ImageCorpus reconstruct(const ImageCorpus& corpus, Method method, Index r, std::uint64_t seed);

/// Clamp to [0, 255] and round half to even.
std::vector<std::uint8_t> to_gray8(const Eigen::VectorXd& image, double pixel_max);

/// Binary PGM (P5, maxval 255, no comments).
std::string encode_pgm(const Eigen::VectorXd& image, Index height, Index width, double pixel_max);

struct GrayImage {
  Index height = 0;
  Index width = 0;
  std::vector<std::uint8_t> pixels;
};
GrayImage decode_pgm(const std::string& bytes);

/// Writes <prefix>_<index>.pgm for each row; returns the written paths.
std::vector<std::filesystem::path> export_images(const ImageCorpus& corpus,
                                                 const std::filesystem::path& directory,
                                                 const std::string& prefix = "image");

struct SheetTile {
  std::string label;
  Eigen::VectorXd image;
};
struct SheetRow {
  std::string label;
  std::vector<SheetTile> tiles;
};

/// Grid of labelled grayscale tiles embedded as PNG data URIs.
std::string contact_sheet_svg(const std::vector<SheetRow>& rows, Index height, Index width,
                              double pixel_max);

/// 8-bit grayscale PNG.
std::string encode_png(const std::vector<std::uint8_t>& pixels, Index height, Index width);

}  // namespace ppca::faces

#endif  // PPCA_FACES_HPP
