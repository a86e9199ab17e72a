#include "ppca/faces.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "ppca/csv.hpp"

namespace ppca::faces {

namespace {

constexpr double kS1Dof = 5.0;
constexpr double kS1Variance = 50.0;

std::string base64(const std::string& in) {
  static constexpr char table[] =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const unsigned v = (std::uint8_t(in[i]) << 16) | (std::uint8_t(in[i + 1]) << 8) |
                       std::uint8_t(in[i + 2]);
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += table[(v >> 6) & 63];
    out += table[v & 63];
  }
  if (i < in.size()) {
    unsigned v = std::uint8_t(in[i]) << 16;
    if (i + 1 < in.size()) v |= std::uint8_t(in[i + 1]) << 8;
    out += table[(v >> 18) & 63];
    out += table[(v >> 12) & 63];
    out += i + 1 < in.size() ? table[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

void put_u32(std::string& s, std::uint32_t v) {
  s += char((v >> 24) & 0xff);
  s += char((v >> 16) & 0xff);
  s += char((v >> 8) & 0xff);
  s += char(v & 0xff);
}

void put_chunk(std::string& png, const char* type, const std::string& data) {
  put_u32(png, static_cast<std::uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  png += body;
  put_u32(png, static_cast<std::uint32_t>(
                   crc32(0L, reinterpret_cast<const Bytef*>(body.data()), uInt(body.size()))));
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void ImageCorpus::validate(bool require_range) const {
  if (height < 1 || width < 1) throw FormatError("image dimensions must be positive");
  if (rows.rows() < 1) throw FormatError("corpus has no images");
  if (rows.cols() != pixels()) {
    throw FormatError("rows have " + std::to_string(rows.cols()) + " pixels, expected " +
                      std::to_string(height) + "x" + std::to_string(width));
  }
  if (!(pixel_max > 0)) throw FormatError("pixel_max must be positive");
  if (!rows.allFinite()) throw FormatError("corpus has non-finite pixels");
  if (require_range && (rows.minCoeff() < 0 || rows.maxCoeff() > pixel_max)) {
    throw FormatError("pixel values outside [0, pixel_max]");
  }
}

std::filesystem::path sidecar_path(const std::filesystem::path& csv_path) {
  auto p = csv_path;
  p.replace_extension(".json");
  return p;
}

ImageCorpus load_corpus(const std::filesystem::path& csv_path) {
  const auto meta_path = sidecar_path(csv_path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(meta_path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("sidecar " + meta_path.string() + ": " + e.what());
  }
  ImageCorpus corpus;
  Index declared_n = 0;
  try {
    declared_n = meta.at("n").get<Index>();
    corpus.height = meta.at("height").get<Index>();
    corpus.width = meta.at("width").get<Index>();
    corpus.pixel_max = meta.value("pixel_max", 255.0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("sidecar " + meta_path.string() + ": " + e.what());
  }
  corpus.rows = csv::read_matrix_file(csv_path.string());
  if (corpus.rows.rows() != declared_n) {
    throw FormatError("sidecar declares n=" + std::to_string(declared_n) + " but CSV has " +
                      std::to_string(corpus.rows.rows()) + " rows");
  }
  corpus.validate(true);
  return corpus;
}

void save_corpus(const ImageCorpus& corpus, const std::filesystem::path& csv_path) {
  corpus.validate(false);
  {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw Error("cannot write " + csv_path.string());
    csv::write_matrix(out, corpus.rows);
  }
  nlohmann::ordered_json meta;
  meta["n"] = corpus.n();
  meta["height"] = corpus.height;
  meta["width"] = corpus.width;
  meta["pixel_max"] = corpus.pixel_max;
  std::ofstream out(sidecar_path(csv_path), std::ios::binary);
  if (!out) throw Error("cannot write sidecar for " + csv_path.string());
  out << meta.dump(2) << '\n';
}

ImageCorpus synthetic_corpus(Index n, Index height, Index width, std::uint64_t seed) {
  if (n < 2 || height < 1 || width < 1) throw InvalidInput("synthetic corpus needs n >= 2 and positive size");
  Rng rng = make_stream(seed, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const Index p = height * width;
  constexpr Index kModes = 6;

  auto blob = [&](double cy, double cx, double sy, double sx) {
    Eigen::VectorXd img(p);
    for (Index y = 0; y < height; ++y)
      for (Index x = 0; x < width; ++x) {
        const double dy = (double(y) + 0.5) / double(height) - cy;
        const double dx = (double(x) + 0.5) / double(width) - cx;
        img(y * width + x) = std::exp(-0.5 * (dy * dy / (sy * sy) + dx * dx / (sx * sx)));
      }
    return img;
  };

  // Oval head, two eyes and a mouth make up the mean face.
  Eigen::VectorXd mean = 150.0 * blob(0.5, 0.5, 0.3, 0.22) - 60.0 * blob(0.4, 0.36, 0.05, 0.06) -
                         60.0 * blob(0.4, 0.64, 0.05, 0.06) - 40.0 * blob(0.7, 0.5, 0.04, 0.12);
  mean.array() += 40.0;

  Eigen::MatrixXd modes(kModes, p);
  for (Index m = 0; m < kModes; ++m) {
    modes.row(m) = blob(0.2 + 0.6 * unit(rng), 0.2 + 0.6 * unit(rng), 0.08 + 0.15 * unit(rng),
                        0.08 + 0.15 * unit(rng))
                       .transpose();
  }
  Eigen::VectorXd scales(kModes);
  for (Index m = 0; m < kModes; ++m) scales(m) = 40.0 / double(m + 1);

  const Eigen::MatrixXd weights = standard_normal(n, kModes, rng) * scales.asDiagonal();
  const Eigen::MatrixXd noise = 2.0 * standard_normal(n, p, rng);

  ImageCorpus out;
  out.height = height;
  out.width = width;
  out.rows = ((weights * modes + noise).rowwise() + mean.transpose()).cwiseMax(0.0).cwiseMin(255.0);
  return out;
}

ContaminationS1 contaminate_s1(const ImageCorpus& corpus, double fraction, Rng& rng) {
  corpus.validate(false);
  if (!(fraction >= 0 && fraction <= 1)) throw InvalidInput("S1 fraction must lie in [0, 1]");
  const auto count = static_cast<Index>(std::floor(fraction * double(corpus.n())));

  std::vector<Index> order(static_cast<std::size_t>(corpus.n()));
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<Index> chosen(order.begin(), order.begin() + count);
  std::sort(chosen.begin(), chosen.end());

  const Index p = corpus.pixels();
  const Eigen::MatrixXd factor =
      std::sqrt(kS1Variance * (kS1Dof - 2.0) / kS1Dof) * Eigen::MatrixXd::Identity(p, p);
  const Eigen::MatrixXd noise = t_draws(count, Eigen::VectorXd::Zero(p), factor, kS1Dof, rng);

  ContaminationS1 out{corpus, chosen};
  for (Index i = 0; i < count; ++i) out.corpus.rows.row(chosen[std::size_t(i)]) += noise.row(i);
  return out;
}

ImageCorpus contaminate_s2(const ImageCorpus& corpus, Index count, Rng& rng) {
  corpus.validate(false);
  if (count < 0) throw InvalidInput("S2 count must be nonnegative");
  std::uniform_int_distribution<int> pixel(0, static_cast<int>(std::lround(corpus.pixel_max)));
  ImageCorpus out = corpus;
  out.rows.conservativeResize(corpus.n() + count, Eigen::NoChange);
  for (Index i = corpus.n(); i < out.n(); ++i) {
    for (Index j = 0; j < out.pixels(); ++j) out.rows(i, j) = pixel(rng);
  }
  return out;
}

ImageCorpus Projection::apply(const ImageCorpus& corpus) const {
  if (corpus.pixels() != mean.size()) throw InvalidInput("projection dimension mismatch");
  ImageCorpus out = corpus;
  const Eigen::MatrixXd centred = corpus.rows.rowwise() - mean;
  out.rows = (centred * basis) * basis.transpose();
  out.rows.rowwise() += mean;
  return out;
}

Projection fit_projection(const ImageCorpus& corpus, Method method, Index r, std::uint64_t seed) {
  corpus.validate(false);
  if (r < 1 || r > std::min(corpus.n() - 1, corpus.pixels())) {
    throw InvalidInput("reconstruction rank " + std::to_string(r) + " outside [1, min(n-1, p)]");
  }
  Rng rng = make_stream(seed, 0);
  const estimators::DataMatrix data(corpus.rows);
  const auto est = estimators::fit(method, data, r, rng);
  return Projection{corpus.rows.colwise().mean(), est.leading_basis(r)};
}

ImageCorpus reconstruct(const ImageCorpus& corpus, Method method, Index r, std::uint64_t seed) {
  return fit_projection(corpus, method, r, seed).apply(corpus);
}

std::vector<std::uint8_t> to_gray8(const Eigen::VectorXd& image, double pixel_max) {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(image.size()));
  const double scale = 255.0 / pixel_max;
  for (Index i = 0; i < image.size(); ++i) {
    // nearbyint honours the default round-to-nearest-even mode.
    const double v = std::clamp(image(i) * scale, 0.0, 255.0);
    out[std::size_t(i)] = static_cast<std::uint8_t>(std::nearbyint(v));
  }
  return out;
}

std::string encode_pgm(const Eigen::VectorXd& image, Index height, Index width,
                       double pixel_max) {
  if (image.size() != height * width) throw InvalidInput("image size does not match dimensions");
  const auto px = to_gray8(image, pixel_max);
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  out.append(reinterpret_cast<const char*>(px.data()), px.size());
  return out;
}

GrayImage decode_pgm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  GrayImage img;
  int maxval = 0;
  in >> magic >> img.width >> img.height >> maxval;
  if (!in || magic != "P5" || maxval != 255 || img.width < 1 || img.height < 1) {
    throw FormatError("not a P5 PGM with maxval 255");
  }
  in.get();  // single whitespace after the header
  const auto count = static_cast<std::size_t>(img.width * img.height);
  img.pixels.resize(count);
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(count));
  if (static_cast<std::size_t>(in.gcount()) != count) throw FormatError("truncated PGM");
  return img;
}

std::vector<std::filesystem::path> export_images(const ImageCorpus& corpus,
                                                 const std::filesystem::path& directory,
                                                 const std::string& prefix) {
  corpus.validate(false);
  std::filesystem::create_directories(directory);
  std::vector<std::filesystem::path> paths;
  for (Index i = 0; i < corpus.n(); ++i) {
    char name[64];
    std::snprintf(name, sizeof name, "_%04ld.pgm", static_cast<long>(i));
    const auto path = directory / (prefix + name);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << encode_pgm(corpus.rows.row(i).transpose(), corpus.height, corpus.width,
                      corpus.pixel_max);
    if (!out) throw Error("failed writing " + path.string());
    paths.push_back(path);
  }
  return paths;
}

std::string encode_png(const std::vector<std::uint8_t>& pixels, Index height, Index width) {
  if (pixels.size() != static_cast<std::size_t>(height * width)) {
    throw InvalidInput("png: pixel count does not match dimensions");
  }
  std::string raw;
  raw.reserve(pixels.size() + static_cast<std::size_t>(height));
  for (Index y = 0; y < height; ++y) {
    raw += '\0';
    raw.append(reinterpret_cast<const char*>(pixels.data() + y * width),
               static_cast<std::size_t>(width));
  }
  uLongf packed_size = compressBound(uLong(raw.size()));
  std::string packed(packed_size, '\0');
  if (compress2(reinterpret_cast<Bytef*>(packed.data()), &packed_size,
                reinterpret_cast<const Bytef*>(raw.data()), uLong(raw.size()), 9) != Z_OK) {
    throw Error("png: deflate failed");
  }
  packed.resize(packed_size);

  std::string png("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  put_u32(ihdr, static_cast<std::uint32_t>(width));
  put_u32(ihdr, static_cast<std::uint32_t>(height));
  ihdr += char(8);  // bit depth
  ihdr += char(0);  // grayscale
  ihdr += std::string(3, '\0');
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", packed);
  put_chunk(png, "IEND", "");
  return png;
}

std::string contact_sheet_svg(const std::vector<SheetRow>& rows, Index height, Index width,
                              double pixel_max) {
  const Index scale = std::max<Index>(1, 96 / std::max(height, width));
  const Index tile_w = width * scale;
  const Index tile_h = height * scale;
  constexpr Index gap = 8, label_w = 120, caption_h = 16;
  std::size_t max_tiles = 0;
  for (const auto& r : rows) max_tiles = std::max(max_tiles, r.tiles.size());

  const Index total_w = label_w + Index(max_tiles) * (tile_w + gap) + gap;
  const Index row_h = tile_h + caption_h + gap;
  const Index total_h = Index(rows.size()) * row_h + gap;

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << total_w << "\" height=\""
      << total_h << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t ri = 0; ri < rows.size(); ++ri) {
    const Index y0 = gap + Index(ri) * row_h;
    svg << "<text x=\"4\" y=\"" << y0 + tile_h / 2 << "\">" << rows[ri].label << "</text>\n";
    for (std::size_t ti = 0; ti < rows[ri].tiles.size(); ++ti) {
      const auto& tile = rows[ri].tiles[ti];
      const Index x0 = label_w + Index(ti) * (tile_w + gap);
      const auto png = encode_png(to_gray8(tile.image, pixel_max), height, width);
      svg << "<image x=\"" << x0 << "\" y=\"" << y0 << "\" width=\"" << tile_w << "\" height=\""
          << tile_h << "\" style=\"image-rendering:pixelated\" href=\"data:image/png;base64,"
          << base64(png) << "\"/>\n";
      svg << "<text x=\"" << x0 + tile_w / 2 << "\" y=\"" << y0 + tile_h + 12
          << "\" text-anchor=\"middle\">" << tile.label << "</text>\n";
    }
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace ppca::faces
