// SPDX-License-Identifier: Apache-2.0
//
// Maze navigation: the network is the velocity controller of a particle and
// must move it vertex to vertex along the shortest route, pausing at each
// vertex. Inputs per step: particle position (2), destination (2), fixation
// one-hot (2).
#pragma once

#include <algorithm>
#include <charconv>
#include <deque>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "noisepref/core/rollout.hpp"

namespace noisepref {

using Point2 = Eigen::Vector2d;

/// Undirected maze graph. Text format (version 1), one record per line,
/// '#' starts a comment:
///
///   maze 1
///   vertex <x> <y>        # vertices are numbered in order of appearance
///   edge <a> <b>          # 0-based vertex ids
class MazeSpec {
 public:
  static constexpr int kFormatVersion = 1;

  MazeSpec() = default;
  MazeSpec(std::vector<Point2> vertices, std::vector<std::pair<int, int>> edges)
      : vertices_(std::move(vertices)), edges_(std::move(edges)) {
    build();
  }

  /// Six vertices on a 3 x 2 unit lattice joined into a corridor loop. Its
  /// longest shortest route is three jaunts, the most a 280-step trial holds.
  static MazeSpec default_maze() {
    return MazeSpec({{0, 0}, {1, 0}, {2, 0}, {0, 1}, {1, 1}, {2, 1}},
                    {{0, 1}, {1, 2}, {2, 5}, {4, 5}, {3, 4}, {0, 3}});
  }

  static MazeSpec parse(std::string_view text) {
    std::vector<Point2> vertices;
    std::vector<std::pair<int, int>> edges;
    bool saw_header = false;
    std::istringstream in{std::string(text)};
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      std::istringstream fields(line);
      std::string keyword;
      if (!(fields >> keyword)) continue;
      const auto fail = [&](const std::string& msg) {
        throw ConfigError("maze line " + std::to_string(line_no) + ": " + msg);
      };
      std::string extra;
      if (keyword == "maze") {
        int version = 0;
        if (!(fields >> version)) fail("expected format version");
        if (version != kFormatVersion) fail("unsupported maze format version " + std::to_string(version));
        saw_header = true;
      } else if (keyword == "vertex") {
        if (!saw_header) fail("missing 'maze <version>' header");
        std::string xs, ys;
        if (!(fields >> xs >> ys)) fail("vertex needs x and y");
        vertices.emplace_back(parse_double(xs, fail), parse_double(ys, fail));
      } else if (keyword == "edge") {
        if (!saw_header) fail("missing 'maze <version>' header");
        int a = -1, b = -1;
        if (!(fields >> a >> b)) fail("edge needs two vertex ids");
        edges.emplace_back(a, b);
      } else {
        fail("unknown record '" + keyword + "'");
      }
      if (fields >> extra) fail("trailing field '" + extra + "'");
    }
    if (!saw_header) throw ConfigError("maze file is missing its 'maze <version>' header");
    return MazeSpec(std::move(vertices), std::move(edges));
  }

  std::string serialize() const {
    std::string out = "maze " + std::to_string(kFormatVersion) + "\n";
    char buf[64];
    for (const auto& v : vertices_) {
      out += "vertex";
      for (double c : {v.x(), v.y()}) {
        auto res = std::to_chars(buf, buf + sizeof buf, c);
        out += ' ';
        out.append(buf, res.ptr);
      }
      out += '\n';
    }
    for (const auto& [a, b] : edges_) out += "edge " + std::to_string(a) + " " + std::to_string(b) + "\n";
    return out;
  }

  const std::vector<Point2>& vertices() const { return vertices_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  int size() const { return static_cast<int>(vertices_.size()); }
  bool connected() const { return connected_; }

  /// Shortest vertex sequence from a to b (BFS, ties to the lowest vertex id); empty if unreachable.
  const std::vector<int>& route(int a, int b) const {
    check_vertex(a);
    check_vertex(b);
    return routes_[static_cast<std::size_t>(a) * vertices_.size() + static_cast<std::size_t>(b)];
  }

  void check_vertex(int v) const {
    if (v < 0 || v >= size()) throw ConfigError("maze vertex " + std::to_string(v) + " does not exist");
  }

 private:
  template <class Fail>
  static double parse_double(const std::string& s, const Fail& fail) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) fail("bad number '" + s + "'");
    return v;
  }

  void build() {
    const int nv = size();
    if (nv < 1) throw ConfigError("maze needs at least one vertex");
    std::vector<std::vector<int>> adj(static_cast<std::size_t>(nv));
    for (const auto& [a, b] : edges_) {
      if (a < 0 || b < 0 || a >= nv || b >= nv) throw ConfigError("maze edge refers to a missing vertex");
      if (a == b) throw ConfigError("maze edge is a self loop");
      adj[static_cast<std::size_t>(a)].push_back(b);
      adj[static_cast<std::size_t>(b)].push_back(a);
    }
    for (auto& nb : adj) {
      std::sort(nb.begin(), nb.end());
      nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    }
    routes_.assign(static_cast<std::size_t>(nv) * static_cast<std::size_t>(nv), {});
    connected_ = true;
    for (int src = 0; src < nv; ++src) {
      std::vector<int> parent(static_cast<std::size_t>(nv), -1);
      std::vector<bool> seen(static_cast<std::size_t>(nv), false);
      std::deque<int> queue{src};
      seen[static_cast<std::size_t>(src)] = true;
      while (!queue.empty()) {
        const int v = queue.front();
        queue.pop_front();
        for (int w : adj[static_cast<std::size_t>(v)]) {
          if (seen[static_cast<std::size_t>(w)]) continue;
          seen[static_cast<std::size_t>(w)] = true;
          parent[static_cast<std::size_t>(w)] = v;
          queue.push_back(w);
        }
      }
      for (int dst = 0; dst < nv; ++dst) {
        if (!seen[static_cast<std::size_t>(dst)]) {
          connected_ = false;
          continue;
        }
        std::vector<int> path;
        for (int v = dst; v != -1; v = parent[static_cast<std::size_t>(v)]) path.push_back(v);
        std::reverse(path.begin(), path.end());
        routes_[static_cast<std::size_t>(src) * static_cast<std::size_t>(nv) + static_cast<std::size_t>(dst)] =
            std::move(path);
      }
    }
  }

  std::vector<Point2> vertices_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> routes_;
  bool connected_ = false;
};

/// 3 s^2 - 2 s^3: zero slope at both ends.
inline double cubic_blend(double s) { return s * s * (3.0 - 2.0 * s); }

/// steps + 1 points along the cubic from `from` (s = 0) to `to` (s = 1).
inline std::vector<Point2> maze_target_trajectory(const Point2& from, const Point2& to, int steps = 20) {
  if (steps < 2) throw ConfigError("a jaunt needs at least two steps");
  std::vector<Point2> out;
  out.reserve(static_cast<std::size_t>(steps) + 1);
  for (int t = 0; t <= steps; ++t) out.push_back(from + (to - from) * cubic_blend(static_cast<double>(t) / steps));
  return out;
}

enum class MazePeriod : std::uint8_t { Downtime, StartingFixation, Jaunt, ViaFixation, Buffer };

struct MazeTiming {
  int trial_steps = 280;
  int downtime = 20;
  int jaunt = 20;
  int fixation_min = 30;
  int fixation_max = 50;

  friend bool operator==(const MazeTiming&, const MazeTiming&) = default;
};

struct MazeTrialSchedule {
  Matrix inputs;   // T x 6: position (filled during closed loop), destination, fixation one-hot
  Matrix targets;  // T x 2 target particle position after each update
  Matrix heading;  // T x 2 unit direction of the current or most recent jaunt (zero before the first)
  std::vector<MazePeriod> labels;
  int start = 0;
  int dest = 0;
  std::vector<int> route;
  Point2 start_position;
};

/// One trial from start to dest. Fixation lengths come from rng indices; if
/// the sampled periods overflow the trial they are redrawn.
inline MazeTrialSchedule gen_maze_trial(const MazeSpec& spec, int start, int dest, const RngStream& rng,
                                        const MazeTiming& timing = {}) {
  const auto& route = spec.route(start, dest);
  if (route.empty())
    throw ConfigError("maze vertex " + std::to_string(dest) + " is unreachable from " + std::to_string(start));
  const int jaunts = static_cast<int>(route.size()) - 1;
  const int fixations = jaunts + 1;
  const int shortest = timing.downtime + fixations * timing.fixation_min + jaunts * timing.jaunt;
  if (shortest > timing.trial_steps)
    throw ConfigError("route of " + std::to_string(jaunts) + " jaunts does not fit in a " +
                      std::to_string(timing.trial_steps) + "-step trial");

  std::vector<int> lengths(static_cast<std::size_t>(fixations));
  int total = 0;
  std::uint64_t index = 0;
  for (int attempt = 0;; ++attempt) {
    total = timing.downtime + jaunts * timing.jaunt;
    for (auto& len : lengths) {
      len = static_cast<int>(rng.uniform_int(index++, timing.fixation_min, timing.fixation_max));
      total += len;
    }
    if (total <= timing.trial_steps) break;
    if (attempt > 10000) throw ConfigError("could not sample fixation periods that fit the trial");
  }
  const auto buffered = static_cast<std::size_t>(rng.uniform_int(index++, 0, fixations - 1));
  const int buffer = timing.trial_steps - total;

  MazeTrialSchedule s;
  const int steps = timing.trial_steps;
  s.start = start;
  s.dest = dest;
  s.route = route;
  s.start_position = spec.vertices()[static_cast<std::size_t>(start)];
  s.inputs = Matrix::Zero(steps, 6);
  s.targets.resize(steps, 2);
  s.heading = Matrix::Zero(steps, 2);
  s.labels.reserve(static_cast<std::size_t>(steps));
  const Point2 dest_pos = spec.vertices()[static_cast<std::size_t>(dest)];

  int row = 0;
  Point2 heading = Point2::Zero();
  const auto emit = [&](MazePeriod label, const Point2& destination, double fix_start, double fix_via,
                        const Point2& target) {
    s.inputs.row(row) << target.x(), target.y(), destination.x(), destination.y(), fix_start, fix_via;
    s.targets.row(row) = target.transpose();
    s.heading.row(row) = heading.transpose();
    s.labels.push_back(label);
    ++row;
  };
  const auto pause = [&](std::size_t fixation, MazePeriod label, double fix_start, double fix_via, const Point2& at) {
    for (int k = 0; k < lengths[fixation]; ++k) emit(label, dest_pos, fix_start, fix_via, at);
    if (fixation == buffered)
      for (int k = 0; k < buffer; ++k) emit(MazePeriod::Buffer, dest_pos, fix_start, fix_via, at);
  };

  for (int k = 0; k < timing.downtime; ++k) emit(MazePeriod::Downtime, s.start_position, 0.0, 1.0, s.start_position);
  pause(0, MazePeriod::StartingFixation, 1.0, 0.0, s.start_position);
  for (int j = 0; j < jaunts; ++j) {
    const Point2 from = spec.vertices()[static_cast<std::size_t>(route[static_cast<std::size_t>(j)])];
    const Point2 to = spec.vertices()[static_cast<std::size_t>(route[static_cast<std::size_t>(j) + 1])];
    const double len = (to - from).norm();
    heading = len > 0.0 ? Point2((to - from) / len) : Point2::Zero();
    const auto path = maze_target_trajectory(from, to, timing.jaunt);
    for (int k = 1; k <= timing.jaunt; ++k) emit(MazePeriod::Jaunt, dest_pos, 0.0, 0.0, path[static_cast<std::size_t>(k)]);
    pause(static_cast<std::size_t>(j) + 1, MazePeriod::ViaFixation, 0.0, 1.0, to);
  }
  return s;
}

/// Closed-loop rollout of one schedule; the network starts from the h0 column of the start vertex.
struct MazeRollout {
  TrialRecord record;
  Matrix particle;  // T x 2 position after each update
};

inline MazeRollout simulate_maze_closed_loop(const NetworkParams& params, const NoiseConfig& noise,
                                             const MazeTrialSchedule& schedule, const RngStream& rng,
                                             const ClosedLoop& loop = {}) {
  if (params.p() != 2) throw ConfigError("maze networks need two outputs");
  const Vector start = schedule.start_position;
  TrialTrace trace = rollout(params, noise, schedule.inputs, schedule.start, rng, &loop, &start);
  MazeRollout out;
  out.record.states = std::move(trace.states);
  out.record.outputs = std::move(trace.outputs);
  out.record.inputs = std::move(trace.inputs);
  out.particle = std::move(trace.positions);
  return out;
}

/// Uniform (start, dest) pairs. Trial i uses rng.substream(i): indices 0 and 1
/// pick the vertices, the Task sub-stream the fixation lengths.
struct MazeTask {
  MazeSpec spec = MazeSpec::default_maze();
  MazeTiming timing;
  ClosedLoop loop;

  MazeTrialSchedule trial(const RngStream& trial_rng) const {
    const int start = static_cast<int>(trial_rng.uniform_int(0, 0, spec.size() - 1));
    const int dest = static_cast<int>(trial_rng.uniform_int(1, 0, spec.size() - 1));
    return gen_maze_trial(spec, start, dest, trial_rng.substream(Channel::Task), timing);
  }

  TrialBatch make_batch(std::int64_t, std::size_t batch_size, const RngStream& rng) const {
    TrialBatch batch;
    batch.closed_loop = loop;
    batch.start_positions.resize(static_cast<Eigen::Index>(batch_size), 2);
    for (std::size_t i = 0; i < batch_size; ++i) {
      MazeTrialSchedule s = trial(rng.substream(i));
      batch.start_positions.row(static_cast<Eigen::Index>(i)) = s.start_position.transpose();
      batch.inputs.push_back(std::move(s.inputs));
      batch.targets.push_back(std::move(s.targets));
      batch.masks.emplace_back(static_cast<std::size_t>(timing.trial_steps), 1);
      batch.init_index.push_back(s.start);
    }
    return batch;
  }
};

}  // namespace noisepref
