// SPDX-License-Identifier: Apache-2.0
#include "data.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "error.hpp"
#include "rng.hpp"

namespace neurotrails {

Shape Dataset::sample_shape() const {
  return Shape(inputs.shape().begin() + 1, inputs.shape().end());
}

void Dataset::validate() const {
  if (inputs.rows() != labels.size())
    fail("dataset has " + std::to_string(inputs.rows()) + " inputs but " +
         std::to_string(labels.size()) + " labels");
  for (auto l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= classes)
      fail("label " + std::to_string(l) + " outside " +
           std::to_string(classes) + " classes");
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    fail_io("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<unsigned char> &b, std::size_t off,
                        const std::filesystem::path &path) {
  if (off + 4 > b.size())
    fail_io(path.string() + ": truncated header at byte offset " +
            std::to_string(off));
  return (std::uint32_t(b[off]) << 24) | (std::uint32_t(b[off + 1]) << 16) |
         (std::uint32_t(b[off + 2]) << 8) | std::uint32_t(b[off + 3]);
}

std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08x", v);
  return buf;
}

void write_be32(std::ofstream &out, std::uint32_t v) {
  const char bytes[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
  out.write(bytes, 4);
}

} // namespace

Dataset load_idx(const std::filesystem::path &images,
                 const std::filesystem::path &labels, std::size_t limit) {
  const auto ib = read_all(images);
  const auto lb = read_all(labels);

  const std::uint32_t imagic = read_be32(ib, 0, images);
  if (imagic != 0x00000803)
    fail_io(images.string() + ": bad image magic " + hex32(imagic) +
            " at byte offset 0");
  const std::uint32_t lmagic = read_be32(lb, 0, labels);
  if (lmagic != 0x00000801)
    fail_io(labels.string() + ": bad label magic " + hex32(lmagic) +
            " at byte offset 0");

  const std::size_t count = read_be32(ib, 4, images);
  const std::size_t rows = read_be32(ib, 8, images);
  const std::size_t cols = read_be32(ib, 12, images);
  const std::size_t lcount = read_be32(lb, 4, labels);
  if (count != lcount)
    fail_io("image count " + std::to_string(count) + " in " + images.string() +
            " does not match label count " + std::to_string(lcount) + " in " +
            labels.string());
  const std::size_t features = rows * cols;
  const std::size_t ipayload = 16, lpayload = 8;
  if (ib.size() < ipayload + count * features)
    fail_io(images.string() + ": truncated pixel data at byte offset " +
            std::to_string(ib.size()) + " (expected " +
            std::to_string(ipayload + count * features) + " bytes)");
  if (lb.size() < lpayload + count)
    fail_io(labels.string() + ": truncated label data at byte offset " +
            std::to_string(lb.size()) + " (expected " +
            std::to_string(lpayload + count) + " bytes)");

  const std::size_t n = limit > 0 ? std::min(limit, count) : count;
  Dataset ds;
  ds.inputs = Tensor({n, features});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n * features; ++i)
    ds.inputs[i] = static_cast<float>(ib[ipayload + i]) / 255.0f;
  std::int32_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = lb[lpayload + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.classes = static_cast<std::size_t>(max_label) + 1;
  return ds;
}

void write_idx(const Dataset &ds, const std::filesystem::path &images,
               const std::filesystem::path &labels) {
  ds.validate();
  const Shape s = ds.sample_shape();
  std::size_t rows = 0, cols = 0;
  if (s.size() == 1) {
    rows = s[0];
    cols = 1;
  } else if (s.size() == 2) {
    rows = s[0];
    cols = s[1];
  } else if (s.size() == 3 && s[0] == 1) {
    rows = s[1];
    cols = s[2];
  } else {
    fail("write_idx supports [N,F], [N,H,W] or [N,1,H,W] inputs, got " +
         shape_str(ds.inputs.shape()));
  }
  std::ofstream io(images, std::ios::binary), lo(labels, std::ios::binary);
  if (!io || !lo)
    fail_io("cannot open IDX output files for writing");
  write_be32(io, 0x00000803);
  write_be32(io, static_cast<std::uint32_t>(ds.size()));
  write_be32(io, static_cast<std::uint32_t>(rows));
  write_be32(io, static_cast<std::uint32_t>(cols));
  for (float v : ds.inputs.data()) {
    const float c = std::clamp(v, 0.0f, 1.0f);
    io.put(static_cast<char>(static_cast<unsigned char>(std::lround(c * 255.0f))));
  }
  write_be32(lo, 0x00000801);
  write_be32(lo, static_cast<std::uint32_t>(ds.size()));
  for (auto l : ds.labels) {
    if (l > 255)
      fail("IDX labels must fit in one byte, got " + std::to_string(l));
    lo.put(static_cast<char>(static_cast<unsigned char>(l)));
  }
  if (!io || !lo)
    fail_io("failed writing IDX files");
}

std::string to_string(SyntheticKind k) {
  switch (k) {
  case SyntheticKind::two_clusters:
    return "two_clusters";
  case SyntheticKind::rings:
    return "rings";
  case SyntheticKind::xor_grid:
    return "xor_grid";
  }
  return "?";
}

SyntheticKind parse_synthetic_kind(const std::string &name) {
  if (name == "two_clusters")
    return SyntheticKind::two_clusters;
  if (name == "rings")
    return SyntheticKind::rings;
  if (name == "xor_grid")
    return SyntheticKind::xor_grid;
  fail("unknown synthetic kind '" + name +
       "' (expected two_clusters, rings, xor_grid)");
}

Dataset gen_synthetic(SyntheticKind kind, std::size_t n, double noise,
                      std::uint64_t seed) {
  if (n < 2)
    fail("synthetic dataset needs n >= 2, got " + std::to_string(n));
  if (!(noise >= 0.0))
    fail("synthetic noise must be >= 0");
  Rng rng = Rng::stream(seed, stream::synthetic, static_cast<std::uint64_t>(kind));
  Dataset ds;
  ds.classes = 2;
  ds.inputs = Tensor({n, 2});
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = static_cast<int>(i % 2);
    double x = 0.0, y = 0.0;
    switch (kind) {
    case SyntheticKind::two_clusters: {
      const double c = label == 0 ? -1.0 : 1.0;
      x = c + noise * rng.normal();
      y = c + noise * rng.normal();
      break;
    }
    case SyntheticKind::rings: {
      const double angle = 2.0 * M_PI * rng.uniform();
      const double r = (label == 0 ? 1.0 : 2.0) + noise * rng.normal();
      x = r * std::cos(angle);
      y = r * std::sin(angle);
      break;
    }
    case SyntheticKind::xor_grid: {
      // label 0: (+,+) or (-,-); label 1: (+,-) or (-,+)
      const double sx = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double sy = label == 0 ? sx : -sx;
      x = sx * (0.1 + 0.9 * rng.uniform()) + noise * rng.normal();
      y = sy * (0.1 + 0.9 * rng.uniform()) + noise * rng.normal();
      break;
    }
    }
    ds.inputs[2 * i] = static_cast<float>(x);
    ds.inputs[2 * i + 1] = static_cast<float>(y);
    ds.labels[i] = label;
  }
  return ds;
}

std::size_t batches_per_epoch(std::size_t n, const BatchPlan &plan) {
  if (plan.batch_size < 1)
    fail("batch size must be >= 1");
  return plan.drop_last ? n / plan.batch_size
                        : (n + plan.batch_size - 1) / plan.batch_size;
}

std::vector<std::vector<std::size_t>> batches(std::size_t n,
                                              const BatchPlan &plan,
                                              std::uint64_t epoch) {
  if (plan.batch_size < 1)
    fail("batch size must be >= 1");
  if (plan.drop_last && plan.batch_size > n)
    fail("batch size " + std::to_string(plan.batch_size) +
         " exceeds dataset size " + std::to_string(n) + " with drop_last");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = Rng::stream(plan.shuffle_seed, stream::shuffle, epoch);
  for (std::size_t i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += plan.batch_size) {
    const std::size_t end = std::min(n, start + plan.batch_size);
    if (plan.drop_last && end - start < plan.batch_size)
      break;
    out.emplace_back(perm.begin() + start, perm.begin() + end);
  }
  return out;
}

SplitData train_test_split(const Dataset &ds, double train_fraction,
                           std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    fail("train fraction must be in (0, 1)");
  const std::size_t n = ds.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng = Rng::stream(seed, stream::split);
  for (std::size_t i = n; i > 1; --i)
    std::swap(perm[i - 1], perm[rng.below(i)]);
  const auto cut = static_cast<std::size_t>(
      std::floor(train_fraction * static_cast<double>(n) + 0.5));
  std::vector<std::size_t> tr(perm.begin(), perm.begin() + cut);
  std::vector<std::size_t> te(perm.begin() + cut, perm.end());
  std::sort(tr.begin(), tr.end());
  std::sort(te.begin(), te.end());
  return {subset(ds, tr), subset(ds, te)};
}

Tensor gather_inputs(const Dataset &ds, const std::vector<std::size_t> &indices) {
  Shape shape = ds.inputs.shape();
  shape[0] = indices.size();
  Tensor out(shape);
  const std::size_t row = ds.inputs.row_size();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const auto src = ds.inputs.row(indices[i]);
    std::copy(src.begin(), src.end(), out.data().begin() + i * row);
  }
  return out;
}

Labels gather_labels(const Dataset &ds, const std::vector<std::size_t> &indices) {
  Labels out(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i)
    out[i] = ds.labels.at(indices[i]);
  return out;
}

Dataset subset(const Dataset &ds, const std::vector<std::size_t> &indices) {
  Dataset out;
  out.classes = ds.classes;
  out.inputs = gather_inputs(ds, indices);
  out.labels = gather_labels(ds, indices);
  return out;
}

Normalization fit_normalization(const Dataset &ds) {
  const std::size_t f = ds.inputs.row_size();
  const std::size_t n = ds.size();
  if (n == 0)
    fail("cannot normalize an empty dataset");
  std::vector<double> mean(f, 0.0), var(f, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < f; ++j)
      mean[j] += ds.inputs[r * f + j];
  for (auto &m : mean)
    m /= static_cast<double>(n);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t j = 0; j < f; ++j) {
      const double d = ds.inputs[r * f + j] - mean[j];
      var[j] += d * d;
    }
  Normalization norm;
  for (std::size_t j = 0; j < f; ++j) {
    const double sd = std::sqrt(var[j] / static_cast<double>(n));
    norm.mean.push_back(static_cast<float>(mean[j]));
    norm.stddev.push_back(sd > 0.0 ? static_cast<float>(sd) : 1.0f);
  }
  return norm;
}

void apply_normalization(Dataset &ds, const Normalization &norm) {
  const std::size_t f = ds.inputs.row_size();
  if (norm.mean.size() != f || norm.stddev.size() != f)
    fail("normalization has " + std::to_string(norm.mean.size()) +
         " features, dataset has " + std::to_string(f));
  for (std::size_t r = 0; r < ds.size(); ++r)
    for (std::size_t j = 0; j < f; ++j) {
      float &v = ds.inputs[r * f + j];
      v = (v - norm.mean[j]) / norm.stddev[j];
    }
}

void export_csv(const Dataset &ds, const std::filesystem::path &path) {
  std::ofstream out(path);
  if (!out)
    fail_io("cannot open " + path.string());
  const std::size_t f = ds.inputs.row_size();
  for (std::size_t j = 0; j < f; ++j)
    out << 'x' << j << ',';
  out << "label\n";
  out.precision(9);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t j = 0; j < f; ++j)
      out << ds.inputs[r * f + j] << ',';
    out << ds.labels[r] << '\n';
  }
  if (!out)
    fail_io("failed writing " + path.string());
}

} // namespace neurotrails
