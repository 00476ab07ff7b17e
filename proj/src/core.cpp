#include "esckit/core.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

namespace esckit {

namespace {

// Philox-4x64-10 round constants (multipliers and Weyl key increments).
constexpr std::uint64_t kPhiloxM0 = 0xD2E7470EE14C6C93ull;
constexpr std::uint64_t kPhiloxM1 = 0xCA5A826395121157ull;
constexpr std::uint64_t kPhiloxW0 = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kPhiloxW1 = 0xBB67AE8584CAA73Bull;

inline std::uint64_t mul_hi(std::uint64_t a, std::uint64_t b) {
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(a) * b) >> 64);
}

inline void philox_round(std::uint64_t c[4], const std::uint64_t k[2]) {
  const std::uint64_t lo0 = kPhiloxM0 * c[0];
  const std::uint64_t hi0 = mul_hi(kPhiloxM0, c[0]);
  const std::uint64_t lo1 = kPhiloxM1 * c[2];
  const std::uint64_t hi1 = mul_hi(kPhiloxM1, c[2]);
  const std::uint64_t n0 = hi1 ^ c[1] ^ k[0];
  const std::uint64_t n1 = lo1;
  const std::uint64_t n2 = hi0 ^ c[3] ^ k[1];
  const std::uint64_t n3 = lo0;
  c[0] = n0;
  c[1] = n1;
  c[2] = n2;
  c[3] = n3;
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::uint64_t stream_index)
    : key_{master_seed, stream_index},
      counter_{0, 0, 0, 0},
      buffer_pos_(4),
      master_seed_(master_seed),
      stream_index_(stream_index),
      cached_gaussian_(0.0),
      has_cached_gaussian_(false) {}

void RngStream::refill() {
  std::uint64_t c[4] = {counter_[0], counter_[1], counter_[2], counter_[3]};
  std::uint64_t k[2] = {key_[0], key_[1]};
  for (int round = 0; round < 10; ++round) {
    if (round > 0) {
      k[0] += kPhiloxW0;
      k[1] += kPhiloxW1;
    }
    philox_round(c, k);
  }
  buffer_[0] = c[0];
  buffer_[1] = c[1];
  buffer_[2] = c[2];
  buffer_[3] = c[3];
  buffer_pos_ = 0;
  // 256-bit counter increment with carry.
  for (int i = 0; i < 4; ++i) {
    if (++counter_[i] != 0) break;
  }
}

std::uint64_t RngStream::next_u64() {
  if (buffer_pos_ >= 4) refill();
  return buffer_[buffer_pos_++];
}

double RngStream::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t RngStream::uniform_below(std::uint64_t bound) {
  if (bound == 0) throw ValidationError("uniform_below: bound must be > 0");
  const std::uint64_t limit = bound * ((~std::uint64_t{0}) / bound);
  for (;;) {
    const std::uint64_t r = next_u64();
    if (r < limit) return r % bound;
  }
}

double RngStream::gaussian() {
  if (has_cached_gaussian_) {
    has_cached_gaussian_ = false;
    return cached_gaussian_;
  }
  for (;;) {
    const double u = 2.0 * uniform01() - 1.0;
    const double v = 2.0 * uniform01() - 1.0;
    const double s = u * u + v * v;
    if (s > 0.0 && s < 1.0) {
      const double scale = std::sqrt(-2.0 * std::log(s) / s);
      cached_gaussian_ = v * scale;
      has_cached_gaussian_ = true;
      return u * scale;
    }
  }
}

Vec gaussian_draw(RngStream& stream, int n) {
  if (n < 1) throw ValidationError("gaussian_draw: n must be >= 1");
  Vec out(n);
  for (int i = 0; i < n; ++i) out[i] = stream.gaussian();
  return out;
}

Signal make_signal(Vec values, double sample_rate_hz) {
  if (values.size() < 1) throw ValidationError("signal must have length >= 1");
  if (!values.allFinite()) throw ValidationError("signal values must be finite");
  if (!(sample_rate_hz > 0.0)) {
    throw ValidationError("sample_rate_hz must be > 0");
  }
  return Signal{std::move(values), sample_rate_hz};
}

ScoreSet make_score_set(std::vector<double> scores) {
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double s = scores[i];
    if (!(s >= 0.0 && s <= 1.0)) {
      throw ValidationError("score " + std::to_string(i) +
                            " outside [0,1]: " + std::to_string(s));
    }
  }
  return ScoreSet{std::move(scores)};
}

std::string format_double(double value) {
  char buf[64];
  const int n = std::snprintf(buf, sizeof(buf), "%.17g", value);
  return std::string(buf, static_cast<std::size_t>(n));
}

double parse_double(const std::string& text, const std::string& context) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc{} || result.ptr != end) {
    throw ParseError(context + ": not a number: '" + text + "'");
  }
  return value;
}

namespace {

std::string meta_path_for(const std::string& csv_path) {
  std::filesystem::path p(csv_path);
  p.replace_extension();
  return p.string() + ".meta.json";
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

bool looks_numeric(const std::string& cell) {
  double v = 0.0;
  const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  return r.ec == std::errc{} && r.ptr == cell.data() + cell.size();
}

}  // namespace

Dataset dataset_read(const std::string& csv_path) {
  std::ifstream in(csv_path);
  if (!in) throw ParseError("cannot open " + csv_path);

  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ParseError(csv_path + ": no signals");

  Dataset ds;
  std::size_t first_row = 0;
  int n_label_cols = 0;
  int n_value_cols = -1;

  const auto head = split_csv_line(lines[0]);
  if (!head.empty() && !looks_numeric(head[0])) {
    for (const auto& name : head) {
      if (name.rfind("label_", 0) == 0) {
        ds.label_names.push_back(name);
      } else if (!ds.label_names.empty()) {
        throw ParseError(csv_path + ": value column '" + name +
                         "' after label columns in header");
      }
    }
    n_label_cols = static_cast<int>(ds.label_names.size());
    n_value_cols = static_cast<int>(head.size()) - n_label_cols;
    first_row = 1;
    if (lines.size() == 1) throw ParseError(csv_path + ": no signals");
  }

  const std::size_t n_rows = lines.size() - first_row;
  std::vector<std::vector<double>> values;
  values.reserve(n_rows);
  std::vector<std::vector<int>> labels;
  labels.reserve(n_rows);

  for (std::size_t r = 0; r < n_rows; ++r) {
    const auto cells = split_csv_line(lines[first_row + r]);
    if (n_value_cols < 0) n_value_cols = static_cast<int>(cells.size());
    if (static_cast<int>(cells.size()) != n_value_cols + n_label_cols) {
      throw ParseError(csv_path + ": row " + std::to_string(r) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(n_value_cols + n_label_cols));
    }
    std::vector<double> row(n_value_cols);
    for (int c = 0; c < n_value_cols; ++c) {
      row[c] = parse_double(cells[c], csv_path + ": row " + std::to_string(r) +
                                          ", column " + std::to_string(c));
    }
    values.push_back(std::move(row));
    if (n_label_cols > 0) {
      std::vector<int> lab(n_label_cols);
      for (int c = 0; c < n_label_cols; ++c) {
        const auto& cell = cells[n_value_cols + c];
        if (cell == "0") {
          lab[c] = 0;
        } else if (cell == "1") {
          lab[c] = 1;
        } else {
          throw ParseError(csv_path + ": row " + std::to_string(r) +
                           ", label column " + std::to_string(c) +
                           " must be 0 or 1, got '" + cell + "'");
        }
      }
      labels.push_back(std::move(lab));
    }
  }

  if (n_value_cols == 0) throw ParseError(csv_path + ": no signals");

  ds.signals.resize(static_cast<Eigen::Index>(n_rows), n_value_cols);
  for (std::size_t r = 0; r < n_rows; ++r) {
    for (int c = 0; c < n_value_cols; ++c) {
      ds.signals(static_cast<Eigen::Index>(r), c) = values[r][c];
    }
  }
  ds.labels.resize(static_cast<Eigen::Index>(labels.size()), n_label_cols);
  for (std::size_t r = 0; r < labels.size(); ++r) {
    for (int c = 0; c < n_label_cols; ++c) {
      ds.labels(static_cast<Eigen::Index>(r), c) = labels[r][c];
    }
  }

  const std::string mpath = meta_path_for(csv_path);
  std::ifstream meta_in(mpath);
  if (meta_in) {
    nlohmann::json meta;
    try {
      meta_in >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(mpath + ": " + e.what());
    }
    ds.sample_rate_hz = meta.value("sample_rate_hz", 1.0);
    if (meta.contains("d") &&
        meta["d"].get<int>() != static_cast<int>(ds.signals.cols())) {
      throw ParseError(mpath + ": d mismatch with CSV");
    }
    if (meta.contains("n_signals") &&
        meta["n_signals"].get<int>() != static_cast<int>(ds.signals.rows())) {
      throw ParseError(mpath + ": n_signals mismatch with CSV");
    }
    if (meta.contains("label_names") && ds.label_names.empty()) {
      ds.label_names =
          meta["label_names"].get<std::vector<std::string>>();
      if (!ds.label_names.empty() &&
          ds.labels.cols() != static_cast<Eigen::Index>(ds.label_names.size())) {
        throw ParseError(mpath + ": label_names do not match CSV columns");
      }
    }
  }
  return ds;
}

void dataset_write(const std::string& csv_path, const Dataset& dataset) {
  const Eigen::Index n = dataset.signals.rows();
  const Eigen::Index d = dataset.signals.cols();
  if (n == 0 || d == 0) throw ValidationError("dataset_write: no signals");
  const Eigen::Index n_labels =
      static_cast<Eigen::Index>(dataset.label_names.size());
  if (n_labels > 0 &&
      (dataset.labels.rows() != n || dataset.labels.cols() != n_labels)) {
    throw ValidationError("dataset_write: label matrix shape mismatch");
  }

  std::ofstream out(csv_path);
  if (!out) throw ValidationError("cannot write " + csv_path);

  if (n_labels > 0) {
    for (Eigen::Index c = 0; c < d; ++c) out << "x" << c << ",";
    for (Eigen::Index c = 0; c < n_labels; ++c) {
      out << dataset.label_names[static_cast<std::size_t>(c)];
      out << (c + 1 < n_labels ? "," : "\n");
    }
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < d; ++c) {
      out << format_double(dataset.signals(r, c));
      if (c + 1 < d || n_labels > 0) out << ",";
    }
    for (Eigen::Index c = 0; c < n_labels; ++c) {
      out << dataset.labels(r, c);
      if (c + 1 < n_labels) out << ",";
    }
    out << "\n";
  }

  nlohmann::json meta;
  meta["sample_rate_hz"] = dataset.sample_rate_hz;
  meta["d"] = static_cast<int>(d);
  meta["n_signals"] = static_cast<int>(n);
  meta["label_names"] = dataset.label_names;
  std::ofstream meta_out(meta_path_for(csv_path));
  if (!meta_out) throw ValidationError("cannot write sidecar for " + csv_path);
  meta_out << meta.dump(2) << "\n";
}

void parallel_for_indexed(int n, int n_workers,
                          const std::function<void(int)>& body) {
  if (n <= 0) return;
  if (n_workers < 1) throw ValidationError("parallel_for_indexed: n_workers must be >= 1");
  const int threads = std::min(n_workers, n);
  if (threads == 1) {
    for (int i = 0; i < n; ++i) body(i);
    return;
  }

  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (first_error) return;
      }
      try {
        body(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace esckit
