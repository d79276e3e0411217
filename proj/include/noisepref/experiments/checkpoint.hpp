// SPDX-License-Identifier: Apache-2.0
//
// Text checkpoint: header line, metadata lines, then each tensor as
// "tensor <name> <rows> <cols>" followed by rows of hexadecimal floats
// (row-major), which round-trip bit-exactly.
#pragma once

#include <cstdint>
#include <cstring>
#include <type_traits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "noisepref/core/network.hpp"
#include "noisepref/experiments/config.hpp"
#include "noisepref/experiments/text.hpp"
#include "noisepref/training/trainer.hpp"

namespace noisepref {

inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  ExperimentKind task = ExperimentKind::Function;
  NoiseConfig noise;
  std::uint64_t seed = 0;
  std::int64_t batches = 0;
  std::string history_digest = fnv1a_hex("");

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  NetworkParams params;
  CheckpointMeta meta;
};

/// Digest of the loss history, one "batch loss lr reg" line per row in hex floats.
inline std::string history_digest(std::span<const HistoryRow> history) {
  std::string text;
  for (const HistoryRow& r : history)
    text += std::to_string(r.batch) + ' ' + format_hex_double(r.loss) + ' ' + format_hex_double(r.lr) + ' ' +
            format_hex_double(r.reg) + '\n';
  return fnv1a_hex(text);
}

/// Bitwise equality of every tensor plus the scalar settings.
inline bool bit_identical(const NetworkParams& a, const NetworkParams& b) {
  bool same = a.tau == b.tau && a.dt == b.dt && a.activation == b.activation && a.trainable == b.trainable;
  std::vector<const double*> left;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> shapes;
  TensorSet::for_each(a, [&](std::string_view, const auto& x) {
    left.push_back(x.data());
    shapes.emplace_back(x.rows(), x.cols());
  });
  std::size_t i = 0;
  TensorSet::for_each(b, [&](std::string_view, const auto& y) {
    const auto [rows, cols] = shapes[i];
    same = same && rows == y.rows() && cols == y.cols() &&
           (y.size() == 0 || std::memcmp(left[i], y.data(), sizeof(double) * static_cast<std::size_t>(y.size())) == 0);
    ++i;
  });
  return same;
}

inline std::string serialize_checkpoint(const Checkpoint& ck) {
  const NetworkParams& p = ck.params;
  std::string out = "noisepref-checkpoint " + std::to_string(kCheckpointVersion) + "\n";
  const auto meta = [&](std::string_view key, const std::string& value) {
    out += "meta ";
    out += key;
    out += ' ';
    out += value;
    out += '\n';
  };
  meta("task", std::string(to_string(ck.meta.task)));
  meta("activation", std::string(to_string(p.activation.kind)));
  meta("alpha", format_hex_double(p.activation.alpha));
  meta("tau", format_hex_double(p.tau));
  meta("dt", format_hex_double(p.dt));
  meta("gamma", format_hex_double(p.gamma()));
  meta("sigma_in", format_hex_double(ck.meta.noise.sigma_in));
  meta("sigma_out", format_hex_double(ck.meta.noise.sigma_out));
  meta("seed", std::to_string(ck.meta.seed));
  meta("batches", std::to_string(ck.meta.batches));
  meta("history_digest", ck.meta.history_digest);
  std::string mask;
  TensorSet::for_each(p, [&](std::string_view name, const auto&) { mask += p.trainable.contains(name) ? '1' : '0'; });
  meta("trainable", mask);
  TensorSet::for_each(p, [&](std::string_view name, const auto& m) {
    out += "tensor " + std::string(name) + ' ' + std::to_string(m.rows()) + ' ' + std::to_string(m.cols()) + '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) {
        if (j) out += ' ';
        out += format_hex_double(m(i, j));
      }
      out += '\n';
    }
  });
  out += "end\n";
  return out;
}

inline Checkpoint parse_checkpoint(std::string_view text, std::string_view source = "checkpoint") {
  std::istringstream in{std::string(text)};
  std::string line;
  int line_no = 0;
  const auto fail = [&](const std::string& what) -> ConfigError {
    return ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": " + what);
  };
  const auto hex = [&](const std::string& s) {
    const auto v = parse_double(s, std::chars_format::hex);
    if (!v) throw fail("bad float '" + s + "'");
    return *v;
  };

  if (!std::getline(in, line)) throw fail("empty checkpoint");
  ++line_no;
  {
    std::istringstream head(line);
    std::string magic;
    int version = 0;
    if (!(head >> magic >> version) || magic != "noisepref-checkpoint") throw fail("not a noisepref checkpoint");
    if (version != kCheckpointVersion)
      throw fail("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                 std::to_string(kCheckpointVersion) + ")");
  }

  Checkpoint ck;
  NetworkParams& p = ck.params;
  std::string mask;
  std::vector<std::string> seen;
  bool ended = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "end") {
      ended = true;
      break;
    }
    if (tag == "meta") {
      std::string key, value;
      ls >> key >> value;
      if (key == "task") ck.meta.task = parse_experiment_kind(value);
      else if (key == "activation") p.activation.kind = parse_activation_kind(value);
      else if (key == "alpha") p.activation.alpha = hex(value);
      else if (key == "tau") p.tau = hex(value);
      else if (key == "dt") p.dt = hex(value);
      else if (key == "gamma") (void)hex(value);  // derived from tau and dt
      else if (key == "sigma_in") ck.meta.noise.sigma_in = hex(value);
      else if (key == "sigma_out") ck.meta.noise.sigma_out = hex(value);
      else if (key == "seed") {
        const auto v = parse_int<std::uint64_t>(value);
        if (!v) throw fail("bad seed");
        ck.meta.seed = *v;
      } else if (key == "batches") {
        const auto v = parse_int<std::int64_t>(value);
        if (!v) throw fail("bad batch count");
        ck.meta.batches = *v;
      } else if (key == "history_digest") ck.meta.history_digest = value;
      else if (key == "trainable") mask = value;
      else throw fail("unknown metadata key '" + key + "'");
      continue;
    }
    if (tag != "tensor") throw fail("unexpected line");
    std::string name;
    Eigen::Index rows = -1, cols = -1;
    if (!(ls >> name >> rows >> cols) || rows < 0 || cols < 0) throw fail("bad tensor header");
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
      if (!std::getline(in, line)) throw fail("truncated tensor " + name);
      ++line_no;
      std::istringstream row(line);
      std::string cell;
      for (Eigen::Index j = 0; j < cols; ++j) {
        if (!(row >> cell)) throw fail("short row in tensor " + name);
        m(i, j) = hex(cell);
      }
      if (row >> cell) throw fail("long row in tensor " + name);
    }
    bool matched = false;
    TensorSet::for_each(p, [&](std::string_view tname, auto& slot) {
      if (tname != name) return;
      matched = true;
      if constexpr (std::decay_t<decltype(slot)>::ColsAtCompileTime == 1) {
        if (cols != 1) throw fail("tensor " + name + " must have one column");
      }
      slot = m;
    });
    if (!matched) throw fail("unknown tensor '" + name + "'");
    seen.push_back(name);
  }
  if (!ended) throw fail("missing end marker");
  if (seen.size() != 6) throw fail("checkpoint must hold all six tensors");
  if (mask.size() != 6) throw fail("bad trainable mask");
  std::size_t idx = 0;
  bool* flags[] = {&p.trainable.w_rec, &p.trainable.w_in, &p.trainable.b_in,
                   &p.trainable.w_out, &p.trainable.b_out, &p.trainable.h0};
  for (bool* f : flags) *f = mask[idx++] == '1';
  p.validate();
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  write_file_atomic(path, serialize_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return parse_checkpoint(read_file(path), path.string());
}

}  // namespace noisepref
