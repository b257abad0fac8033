#include "tcu/ecg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <string_view>

#include "tcu/error.hpp"
#include "tcu/kv.hpp"

namespace tcu {

BeatRecord Dataset::record(std::int64_t i) const {
  return {samples.row(i).transpose(), labels[static_cast<std::size_t>(i)]};
}

std::vector<std::int64_t> Dataset::class_counts() const {
  std::vector<std::int64_t> counts(kNumClasses, 0);
  for (const int l : labels) ++counts[static_cast<std::size_t>(l)];
  return counts;
}

Dataset Dataset::from_records(const std::vector<BeatRecord>& records, std::string provenance) {
  Dataset ds;
  ds.samples.resize(static_cast<Eigen::Index>(records.size()), kBeatSamples);
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].samples.size() != kBeatSamples) {
      throw ShapeError("beat record " + std::to_string(i) + " has " +
                       std::to_string(records[i].samples.size()) + " samples");
    }
    ds.samples.row(static_cast<Eigen::Index>(i)) = records[i].samples.transpose();
    ds.labels.push_back(records[i].label);
    ds.ids.push_back(static_cast<std::int64_t>(i));
  }
  ds.provenance = std::move(provenance);
  return ds;
}

Dataset parse_csv(const std::string& text, const std::string& source) {
  std::vector<double> values;
  std::vector<int> labels;
  std::size_t row = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string_view line(text.data() + pos, end - pos);
    pos = end + 1;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++row;
    if (line.find_first_not_of(" \t") == std::string_view::npos) continue;

    const std::string where = source + ": row " + std::to_string(row);
    const auto cells = split(line, ',');
    if (cells.size() != kBeatSamples + 1) {
      throw FormatError(where + ": expected 188 columns, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c <= kBeatSamples; ++c) {
      const std::string cell = trim(cells[c]);
      double v = 0.0;
      const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc() || p != cell.data() + cell.size() || !std::isfinite(v)) {
        throw FormatError(where + ", column " + std::to_string(c + 1) + ": not a number '" +
                          cell + "'");
      }
      if (c < kBeatSamples) {
        if (v < 0.0 || v > 1.0) {
          throw FormatError(where + ", column " + std::to_string(c + 1) + ": sample " + cell +
                            " outside [0, 1]");
        }
        values.push_back(v);
      } else {
        if (v != std::floor(v) || v < 0 || v >= kNumClasses) {
          throw FormatError(where + ": label " + cell + " not in 0..4");
        }
        labels.push_back(static_cast<int>(v));
      }
    }
  }
  if (labels.empty()) throw FormatError(source + ": no beat records");

  Dataset ds;
  const auto n = static_cast<Eigen::Index>(labels.size());
  ds.samples = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                              Eigen::RowMajor>>(values.data(), n, kBeatSamples);
  ds.labels = std::move(labels);
  ds.ids.resize(ds.labels.size());
  for (std::size_t i = 0; i < ds.ids.size(); ++i) ds.ids[i] = static_cast<std::int64_t>(i);
  ds.provenance = source;
  return ds;
}

Dataset load_csv(const std::filesystem::path& path) {
  return parse_csv(read_text_file(path), path.string());
}

std::string format_csv(const Dataset& ds) {
  std::string out;
  char buf[32];
  for (std::int64_t i = 0; i < ds.size(); ++i) {
    for (int c = 0; c < kBeatSamples; ++c) {
      // Shortest representation that parses back to the same double.
      const auto res = std::to_chars(buf, buf + sizeof buf, ds.samples(i, c));
      out.append(buf, res.ptr);
      out += ',';
    }
    out += std::to_string(ds.labels[static_cast<std::size_t>(i)]);
    out += '\n';
  }
  return out;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  write_text_file(path, format_csv(ds));
}

PipelineRng::PipelineRng(std::uint64_t seed) : gen_(seed) {}

double PipelineRng::uniform() {
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

std::int64_t PipelineRng::below(std::int64_t n) {
  const auto r = static_cast<std::int64_t>(uniform() * static_cast<double>(n));
  return std::min(r, n - 1);
}

double PipelineRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1], keeps log finite
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

Dataset add_gaussian_noise(const Dataset& ds, const AugmentConfig& cfg) {
  if (!(cfg.noise_sigma >= 0.0)) throw Error("noise sigma must be >= 0");
  Dataset out = ds;
  out.provenance += " | noise(sigma=" + std::to_string(cfg.noise_sigma) +
                    ", seed=" + std::to_string(cfg.seed) + ")";
  if (cfg.noise_sigma == 0.0) return out;
  PipelineRng rng(cfg.seed);
  for (Eigen::Index i = 0; i < out.samples.rows(); ++i) {
    for (Eigen::Index c = 0; c < out.samples.cols(); ++c) {
      const double v = out.samples(i, c) + cfg.noise_sigma * rng.normal();
      out.samples(i, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  return out;
}

Dataset smote_resample(const Dataset& ds, int k, std::uint64_t seed) {
  if (k < 1) throw Error("SMOTE k must be >= 1");
  const auto counts = ds.class_counts();
  const std::int64_t target = *std::max_element(counts.begin(), counts.end());

  std::vector<std::vector<std::int64_t>> members(kNumClasses);
  for (std::int64_t i = 0; i < ds.size(); ++i) {
    members[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
  }
  for (int c = 0; c < kNumClasses; ++c) {
    const auto n = counts[static_cast<std::size_t>(c)];
    if (n > 0 && n < target && n < 2) {
      throw Error("SMOTE needs at least 2 records in class " + std::to_string(c) + ", found " +
                  std::to_string(n));
    }
  }

  PipelineRng rng(seed);
  std::vector<Eigen::VectorXd> synth;
  std::vector<int> synth_labels;
  for (int c = 0; c < kNumClasses; ++c) {
    const auto& idx = members[static_cast<std::size_t>(c)];
    const auto n = static_cast<std::int64_t>(idx.size());
    if (n == 0 || n >= target) continue;
    const std::int64_t k_eff = std::min<std::int64_t>(k, n - 1);

    Eigen::MatrixXd x(n, ds.samples.cols());
    for (std::int64_t i = 0; i < n; ++i) x.row(i) = ds.samples.row(idx[static_cast<std::size_t>(i)]);
    // Squared distances within the class; ties resolve to the lower index.
    Eigen::MatrixXd d2(n, n);
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < n; ++j) d2(i, j) = (x.row(i) - x.row(j)).squaredNorm();
    }
    std::vector<std::vector<std::int64_t>> nn(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      std::vector<std::int64_t> order;
      for (std::int64_t j = 0; j < n; ++j) {
        if (j != i) order.push_back(j);
      }
      std::stable_sort(order.begin(), order.end(),
                       [&](std::int64_t a, std::int64_t b) { return d2(i, a) < d2(i, b); });
      order.resize(static_cast<std::size_t>(k_eff));
      nn[static_cast<std::size_t>(i)] = std::move(order);
    }

    for (std::int64_t s = 0; s < target - n; ++s) {
      const std::int64_t base = s % n;
      const std::int64_t nb = nn[static_cast<std::size_t>(base)][static_cast<std::size_t>(
          rng.below(k_eff))];
      const double u = rng.uniform();
      synth.push_back((x.row(base) + u * (x.row(nb) - x.row(base))).transpose());
      synth_labels.push_back(c);
    }
  }

  Dataset out;
  const auto n0 = ds.size();
  out.samples.resize(n0 + static_cast<Eigen::Index>(synth.size()), ds.samples.cols());
  out.samples.topRows(n0) = ds.samples;
  for (std::size_t i = 0; i < synth.size(); ++i) {
    out.samples.row(n0 + static_cast<Eigen::Index>(i)) = synth[i].transpose();
  }
  out.labels = ds.labels;
  out.labels.insert(out.labels.end(), synth_labels.begin(), synth_labels.end());
  out.ids = ds.ids;
  out.ids.resize(out.labels.size(), -1);
  out.provenance = ds.provenance + " | smote(k=" + std::to_string(k) +
                   ", seed=" + std::to_string(seed) + ")";
  return out;
}

namespace {

void shuffle(std::vector<std::int64_t>& v, PipelineRng& rng) {
  for (std::int64_t i = static_cast<std::int64_t>(v.size()) - 1; i > 0; --i) {
    std::swap(v[static_cast<std::size_t>(i)], v[static_cast<std::size_t>(rng.below(i + 1))]);
  }
}

Dataset subset(const Dataset& ds, const std::vector<std::int64_t>& rows, const std::string& tag) {
  Dataset out;
  out.samples.resize(static_cast<Eigen::Index>(rows.size()), ds.samples.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.samples.row(static_cast<Eigen::Index>(i)) = ds.samples.row(rows[i]);
    out.labels.push_back(ds.labels[static_cast<std::size_t>(rows[i])]);
    out.ids.push_back(ds.ids[static_cast<std::size_t>(rows[i])]);
  }
  out.provenance = ds.provenance + " | " + tag;
  return out;
}

}  // namespace

std::pair<Dataset, Dataset> stratified_split(const Dataset& ds, double train_frac,
                                             std::uint64_t seed) {
  if (!(train_frac >= 0.0 && train_frac <= 1.0)) throw Error("train fraction must be in [0, 1]");
  PipelineRng rng(seed);
  std::vector<std::vector<std::int64_t>> members(kNumClasses);
  for (std::int64_t i = 0; i < ds.size(); ++i) {
    members[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])].push_back(i);
  }
  std::vector<std::int64_t> train, val;
  for (auto& m : members) {
    shuffle(m, rng);
    const auto n_train =
        static_cast<std::size_t>(std::llround(train_frac * static_cast<double>(m.size())));
    train.insert(train.end(), m.begin(), m.begin() + static_cast<std::ptrdiff_t>(n_train));
    val.insert(val.end(), m.begin() + static_cast<std::ptrdiff_t>(n_train), m.end());
  }
  shuffle(train, rng);
  shuffle(val, rng);
  const std::string tag = "split(frac=" + std::to_string(train_frac) +
                          ", seed=" + std::to_string(seed) + ")";
  return {subset(ds, train, tag + " train"), subset(ds, val, tag + " val")};
}

}  // namespace tcu
