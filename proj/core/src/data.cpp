#include "fedsim/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedsim/errors.hpp"
#include "fedsim/rng.hpp"

namespace fedsim {

namespace {

// chunk sizes for an even split; the first (n mod k) parts get one extra
std::vector<std::size_t> split_sizes(std::size_t n, std::size_t k) {
  std::vector<std::size_t> sizes(k, n / k);
  for (std::size_t i = 0; i < n % k; ++i) ++sizes[i];
  return sizes;
}

void append_samples(LocalDataset& out, const Dataset& src,
                    const std::vector<std::size_t>& order, std::size_t lo,
                    std::size_t hi) {
  for (std::size_t i = lo; i < hi; ++i) {
    out.features.push_back(src.features[order[i]]);
    out.labels.push_back(src.labels[order[i]]);
  }
}

void sort_by_label(std::vector<std::size_t>& idx, const Dataset& src) {
  // ties broken by original index, so the result is independent of the
  // incoming order of `idx`
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (src.labels[a] != src.labels[b]) return src.labels[a] < src.labels[b];
    return a < b;
  });
}

}  // namespace

FederatedDataset partition(const Dataset& dataset, const PartitionSpec& spec,
                           std::size_t n_clients, std::size_t blocks) {
  if (n_clients < 1) throw InvalidInput("partition: need at least one client");
  if (blocks < 1) throw InvalidInput("partition: need at least one block");
  const std::size_t n = dataset.size();
  if (n_clients * blocks > n) {
    throw InvalidInput("partition: too few samples for N clients x M blocks");
  }
  if (spec.scheme == PartitionScheme::Mixture) {
    if (!spec.c_percent) {
      throw InvalidInput("partition: mixture scheme requires c_percent");
    }
    if (*spec.c_percent < 0.0 || *spec.c_percent > 100.0) {
      throw InvalidInput("partition: c_percent must be in [0, 100]");
    }
  } else if (spec.c_percent) {
    throw InvalidInput("partition: c_percent only applies to the mixture scheme");
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  FederatedDataset fed;
  fed.clients.resize(n_clients);

  switch (spec.scheme) {
    case PartitionScheme::Iid: {
      Rng rng(spec.seed);
      rng.shuffle(order);
      const auto sizes = split_sizes(n, n_clients);
      std::size_t pos = 0;
      for (std::size_t i = 0; i < n_clients; ++i) {
        append_samples(fed.clients[i], dataset, order, pos, pos + sizes[i]);
        pos += sizes[i];
      }
      break;
    }
    case PartitionScheme::Sorted: {
      sort_by_label(order, dataset);
      const auto sizes = split_sizes(n, n_clients);
      std::size_t pos = 0;
      for (std::size_t i = 0; i < n_clients; ++i) {
        append_samples(fed.clients[i], dataset, order, pos, pos + sizes[i]);
        pos += sizes[i];
      }
      break;
    }
    case PartitionScheme::Mixture: {
      Rng rng(spec.seed);
      rng.shuffle(order);
      const std::size_t n_tail = static_cast<std::size_t>(
          std::llround(*spec.c_percent * static_cast<double>(n) / 100.0));
      const std::size_t n_head = n - n_tail;
      std::vector<std::size_t> tail(order.begin() + n_head, order.end());
      sort_by_label(tail, dataset);
      const auto head_sizes = split_sizes(n_head, n_clients);
      const auto tail_sizes = split_sizes(n_tail, n_clients);
      std::size_t hpos = 0, tpos = 0;
      for (std::size_t i = 0; i < n_clients; ++i) {
        append_samples(fed.clients[i], dataset, order, hpos, hpos + head_sizes[i]);
        hpos += head_sizes[i];
        append_samples(fed.clients[i], dataset, tail, tpos, tpos + tail_sizes[i]);
        tpos += tail_sizes[i];
      }
      break;
    }
  }

  for (auto& client : fed.clients) client.set_blocks(blocks);
  return fed;
}

LrmeData gen_lrme(std::size_t dim, std::size_t rank,
                  std::size_t samples_per_client, std::size_t n_clients,
                  double noise_sigma, std::uint64_t seed,
                  std::size_t test_samples) {
  if (rank > dim) throw InvalidInput("gen_lrme: rank exceeds dimension");
  if (dim == 0 || n_clients == 0 || samples_per_client == 0) {
    throw InvalidInput("gen_lrme: zero-sized instance");
  }
  if (noise_sigma < 0.0) throw InvalidInput("gen_lrme: negative noise");

  LrmeData out;
  out.truth.dim = dim;
  out.truth.rank = rank;
  out.truth.x_g = ParamMatrix(dim, dim, 0.0);
  for (std::size_t i = 0; i < rank; ++i) out.truth.x_g.at(i, i) = 1.0;

  Rng rng(seed);
  const auto draw = [&](LocalDataset& dst, std::size_t count) {
    for (std::size_t s = 0; s < count; ++s) {
      std::vector<double> d(dim * dim);
      for (double& e : d) e = rng.normal(0.1, 1.0);
      double y = 0.0;
      for (std::size_t i = 0; i < rank; ++i) y += d[i * dim + i];  // <X_G, D>
      if (noise_sigma > 0.0) y += rng.normal(0.0, noise_sigma);
      dst.features.push_back(std::move(d));
      dst.labels.push_back(y);
    }
    dst.set_blocks(1);
  };

  out.fed.clients.resize(n_clients);
  for (auto& client : out.fed.clients) draw(client, samples_per_client);
  if (test_samples > 0) {
    out.fed.test.emplace();
    draw(*out.fed.test, test_samples);
  }
  return out;
}

Dataset gen_logistic(std::size_t dim, std::size_t classes, std::size_t samples,
                     double separation, std::uint64_t seed) {
  if (classes < 2) throw InvalidInput("gen_logistic: need >= 2 classes");
  if (dim == 0 || samples == 0) throw InvalidInput("gen_logistic: empty instance");
  if (separation < 0.0) throw InvalidInput("gen_logistic: negative separation");

  Rng rng(seed);
  std::vector<std::vector<double>> centers(classes, std::vector<double>(dim));
  for (auto& c : centers) {
    double nrm = 0.0;
    for (double& v : c) {
      v = rng.normal();
      nrm += v * v;
    }
    nrm = std::sqrt(nrm);
    for (double& v : c) v = separation * v / nrm;
  }

  Dataset out;
  out.features.reserve(samples);
  out.labels.reserve(samples);
  for (std::size_t k = 0; k < samples; ++k) {
    const std::size_t label = k % classes;
    std::vector<double> x(dim);
    for (std::size_t i = 0; i < dim; ++i) x[i] = centers[label][i] + rng.normal();
    out.features.push_back(std::move(x));
    out.labels.push_back(static_cast<double>(label));
  }
  return out;
}

namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t pos,
                        const std::string& path) {
  if (pos + 4 > buf.size()) {
    throw ParseError("'" + path + "': truncated header at byte " +
                     std::to_string(pos));
  }
  return (std::uint32_t(buf[pos]) << 24) | (std::uint32_t(buf[pos + 1]) << 16) |
         (std::uint32_t(buf[pos + 2]) << 8) | std::uint32_t(buf[pos + 3]);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_all(images_path);
  const std::uint32_t img_magic = read_be32(img, 0, images_path);
  if (img_magic != kIdxImageMagic) {
    std::ostringstream msg;
    msg << "'" << images_path << "': bad image magic 0x" << std::hex << img_magic
        << ", expected 0x" << kIdxImageMagic;
    throw ParseError(msg.str());
  }
  const std::uint32_t count = read_be32(img, 4, images_path);
  const std::uint32_t rows = read_be32(img, 8, images_path);
  const std::uint32_t cols = read_be32(img, 12, images_path);
  const std::size_t expected = 16 + std::size_t(count) * rows * cols;
  if (img.size() != expected) {
    throw ParseError("'" + images_path + "': expected " +
                     std::to_string(expected) + " bytes, got " +
                     std::to_string(img.size()));
  }

  const auto lbl = read_all(labels_path);
  const std::uint32_t lbl_magic = read_be32(lbl, 0, labels_path);
  if (lbl_magic != kIdxLabelMagic) {
    std::ostringstream msg;
    msg << "'" << labels_path << "': bad label magic 0x" << std::hex << lbl_magic
        << ", expected 0x" << kIdxLabelMagic;
    throw ParseError(msg.str());
  }
  const std::uint32_t lbl_count = read_be32(lbl, 4, labels_path);
  if (lbl.size() != 8 + std::size_t(lbl_count)) {
    throw ParseError("'" + labels_path + "': expected " +
                     std::to_string(8 + std::size_t(lbl_count)) +
                     " bytes, got " + std::to_string(lbl.size()));
  }
  if (lbl_count != count) {
    throw ParseError("IDX pair mismatch: " + std::to_string(count) +
                     " images vs " + std::to_string(lbl_count) + " labels");
  }

  Dataset out;
  const std::size_t pixels = std::size_t(rows) * cols;
  out.features.reserve(count);
  out.labels.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    std::vector<double> x(pixels);
    const std::size_t base = 16 + k * pixels;
    for (std::size_t i = 0; i < pixels; ++i) {
      x[i] = static_cast<double>(img[base + i]) / 255.0;
    }
    out.features.push_back(std::move(x));
    out.labels.push_back(static_cast<double>(lbl[8 + k]));
  }
  return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  fields.push_back(cur);
  return fields;
}

bool parse_double(const std::string& s, double& out) {
  const char* begin = s.data();
  const char* end = begin + s.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t')) --end;
  if (begin == end) return false;
  const auto res = std::from_chars(begin, end, out);
  return res.ec == std::errc() && res.ptr == end;
}

}  // namespace

Dataset load_csv(const std::string& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");

  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) throw ParseError("'" + path + "': no data rows");

  // header auto-detection: any non-numeric field in the first row
  bool has_header = false;
  for (const auto& f : rows.front()) {
    double tmp;
    if (!parse_double(f, tmp)) {
      has_header = true;
      break;
    }
  }

  const std::size_t width = rows.front().size();
  std::size_t label_idx = width;
  if (has_header) {
    for (std::size_t i = 0; i < width; ++i) {
      if (rows.front()[i] == label_column) {
        label_idx = i;
        break;
      }
    }
  }
  if (label_idx == width) {
    double idx_val;
    if (parse_double(label_column, idx_val) && idx_val >= 0.0 &&
        idx_val < static_cast<double>(width) &&
        idx_val == std::floor(idx_val)) {
      label_idx = static_cast<std::size_t>(idx_val);
    } else {
      throw ParseError("'" + path + "': label column '" + label_column +
                       "' not found");
    }
  }

  Dataset out;
  const std::size_t first_data = has_header ? 1 : 0;
  if (rows.size() == first_data) throw ParseError("'" + path + "': no data rows");
  for (std::size_t r = first_data; r < rows.size(); ++r) {
    const auto& fields = rows[r];
    if (fields.size() != width) {
      throw ParseError("'" + path + "': row " + std::to_string(r + 1) +
                       ": expected " + std::to_string(width) + " fields, got " +
                       std::to_string(fields.size()));
    }
    std::vector<double> x;
    x.reserve(width - 1);
    double label = 0.0;
    for (std::size_t c = 0; c < width; ++c) {
      double v;
      if (!parse_double(fields[c], v)) {
        throw ParseError("'" + path + "': row " + std::to_string(r + 1) +
                         ", column " + std::to_string(c + 1) + ": '" +
                         fields[c] + "' is not numeric");
      }
      if (c == label_idx) {
        label = v;
      } else {
        x.push_back(v);
      }
    }
    out.features.push_back(std::move(x));
    out.labels.push_back(label);
  }
  return out;
}

}  // namespace fedsim
