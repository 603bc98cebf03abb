#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "freewheel/error.hpp"
#include "freewheel/params.hpp"

namespace freewheel {

struct CycleSample {
  double s = 0.0;      ///< position [m]
  double grade = 0.0;  ///< rise over run [-]
  double v_ref = 0.0;  ///< reference speed [m/s]

  friend bool operator==(const CycleSample&, const CycleSample&) = default;
};

/// Position-indexed road grade and piecewise-constant reference speed on a
/// uniform grid.
struct DrivingCycle {
  std::vector<CycleSample> samples;
  double delta_s = 15.0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  const CycleSample& operator[](std::size_t i) const { return samples[i]; }
  double length() const { return samples.empty() ? 0.0 : samples.back().s - samples.front().s; }

  void validate() const {
    if (!(delta_s > 0.0)) throw ConfigError("cycle spacing must be positive");
    if (samples.empty()) throw ConfigError("cycle has no samples");
    const double tol = 1e-9 * std::max(1.0, std::abs(samples.back().s)) + 1e-9 * delta_s;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const auto& x = samples[i];
      if (!(x.v_ref > 0.0)) throw ConfigError("cycle v_ref must be positive at sample " + std::to_string(i));
      if (!(std::abs(x.grade) <= 0.1)) throw ConfigError("cycle |grade| exceeds 0.1 at sample " + std::to_string(i));
      if (i > 0 && std::abs(x.s - samples[i - 1].s - delta_s) > tol)
        throw ConfigError("cycle positions are not uniformly spaced at sample " + std::to_string(i));
    }
  }

  friend bool operator==(const DrivingCycle&, const DrivingCycle&) = default;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline bool parse_double(std::string_view s, double& out) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == sep) {
      out.push_back(line.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

/// Shortest decimal representation that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline constexpr std::string_view kCycleHeader = "s_m,grade,v_ref_mps";

/// Reads the raw rows of a cycle CSV without resampling.
inline std::vector<CycleSample> read_cycle_rows(std::istream& in, const std::string& source = "<cycle>") {
  std::vector<CycleSample> rows;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = detail::trim(line);
    if (body.empty() || body.front() == '#') continue;
    if (!header_seen) {
      std::string compact;
      for (char ch : body)
        if (ch != ' ' && ch != '\t') compact += ch;
      if (compact != kCycleHeader) throw ParseError(source, line_no, "expected header '" + std::string(kCycleHeader) + "'");
      header_seen = true;
      continue;
    }
    const auto fields = detail::split(body, ',');
    if (fields.size() != 3) throw ParseError(source, line_no, "expected 3 fields, got " + std::to_string(fields.size()));
    CycleSample x;
    if (!detail::parse_double(fields[0], x.s)) throw ParseError(source, line_no, "bad position");
    if (!detail::parse_double(fields[1], x.grade)) throw ParseError(source, line_no, "bad grade");
    if (!detail::parse_double(fields[2], x.v_ref)) throw ParseError(source, line_no, "bad reference speed");
    if (!(x.v_ref > 0.0)) throw ParseError(source, line_no, "reference speed must be positive");
    if (!(std::abs(x.grade) <= 0.1)) throw ParseError(source, line_no, "|grade| must not exceed 0.1");
    if (!rows.empty() && !(x.s > rows.back().s))
      throw ParseError(source, line_no, "positions must be strictly increasing");
    rows.push_back(x);
  }
  if (!header_seen) throw ParseError(source, line_no, "missing header");
  if (rows.empty()) throw ParseError(source, line_no, "no data rows");
  return rows;
}

/// Resamples raw rows onto s0 + i * delta_s: grade is interpolated linearly,
/// v_ref is held from the last row at or before each position.
inline DrivingCycle resample(const std::vector<CycleSample>& rows, double delta_s) {
  if (!(delta_s > 0.0)) throw ConfigError("resample spacing must be positive");
  if (rows.empty()) throw ConfigError("cannot resample an empty cycle");
  const double s0 = rows.front().s;
  const double span = rows.back().s - s0;
  // Tolerate round-off so that an exact multiple keeps its last sample.
  const auto n = static_cast<std::size_t>(std::floor(span / delta_s * (1.0 + 1e-12) + 1e-9)) + 1;
  DrivingCycle c;
  c.delta_s = delta_s;
  c.samples.reserve(n);
  std::size_t j = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double s = s0 + static_cast<double>(i) * delta_s;
    while (j + 1 < rows.size() && rows[j + 1].s <= s) ++j;
    CycleSample x;
    x.s = s;
    x.v_ref = rows[j].v_ref;
    if (j + 1 < rows.size()) {
      const double t = (s - rows[j].s) / (rows[j + 1].s - rows[j].s);
      x.grade = t == 0.0 ? rows[j].grade : rows[j].grade + t * (rows[j + 1].grade - rows[j].grade);
    } else {
      x.grade = rows[j].grade;
    }
    c.samples.push_back(x);
  }
  if (c.samples.size() < 2) throw ConfigError("cycle shorter than one step of " + detail::format_double(delta_s) + " m");
  return c;
}

inline DrivingCycle load_cycle(const std::string& path, double delta_s) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open cycle file '" + path + "'");
  return resample(read_cycle_rows(in, path), delta_s);
}

inline void write_cycle(std::ostream& out, const DrivingCycle& c) {
  out << kCycleHeader << '\n';
  for (const auto& x : c.samples)
    out << detail::format_double(x.s) << ',' << detail::format_double(x.grade) << ','
        << detail::format_double(x.v_ref) << '\n';
}

inline void save_cycle(const std::string& path, const DrivingCycle& c) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write cycle file '" + path + "'");
  write_cycle(out, c);
}

/// Shortens every run of constant v_ref longer than max_len to max_len by
/// deleting samples from the middle of the run, then re-indexes positions.
inline DrivingCycle trim_constant_stretches(const DrivingCycle& c, double max_len = 1000.0) {
  if (!(max_len > 0.0)) throw ConfigError("max_len must be positive");
  const auto keep = static_cast<std::size_t>(std::max<long long>(1, std::llround(max_len / c.delta_s)));
  DrivingCycle out;
  out.delta_s = c.delta_s;
  std::size_t i = 0;
  while (i < c.size()) {
    std::size_t j = i;
    while (j + 1 < c.size() && c[j + 1].v_ref == c[i].v_ref) ++j;
    const std::size_t count = j - i + 1;
    if (count > keep) {
      const std::size_t head = (keep + 1) / 2;
      const std::size_t tail = keep - head;
      for (std::size_t k = i; k < i + head; ++k) out.samples.push_back(c[k]);
      for (std::size_t k = j + 1 - tail; k <= j; ++k) out.samples.push_back(c[k]);
    } else {
      for (std::size_t k = i; k <= j; ++k) out.samples.push_back(c[k]);
    }
    i = j + 1;
  }
  if (!out.samples.empty()) {
    const double s0 = c.samples.front().s;
    for (std::size_t k = 0; k < out.size(); ++k) out.samples[k].s = s0 + static_cast<double>(k) * c.delta_s;
  }
  return out;
}

/// Parameters of the synthetic distribution-cycle generator.
struct SyntheticCycleSpec {
  double length_m = 8000.0;
  double delta_s = 15.0;
  double grade_bound = 0.043;
  std::vector<double> speeds_kmh{30.0, 50.0, 60.0, 70.0, 80.0};
  double min_segment_m = 300.0;
  double max_segment_m = 1000.0;
  double min_knot_spacing_m = 150.0;
  double max_knot_spacing_m = 600.0;
};

namespace detail {

/// Uniform double in [0, 1) from the top 53 bits; platform independent.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

inline double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

inline std::size_t uniform_index(std::mt19937_64& rng, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n)));
}

}  // namespace detail

/// Deterministic synthetic distribution cycle: speed segments drawn from the
/// configured speed set (adjacent segments differ) and a piecewise-linear grade
/// profile bounded by grade_bound.
inline DrivingCycle generate_synthetic_cycle(std::uint64_t seed, const SyntheticCycleSpec& spec = {}) {
  if (!(spec.length_m > 0.0) || !(spec.delta_s > 0.0)) throw ConfigError("generator length and spacing must be positive");
  if (!(spec.grade_bound >= 0.0) || spec.grade_bound > 0.1) throw ConfigError("generator grade bound must lie in [0, 0.1]");
  if (spec.speeds_kmh.empty()) throw ConfigError("generator speed set is empty");
  for (double v : spec.speeds_kmh)
    if (!(v > 0.0)) throw ConfigError("generator speeds must be positive");
  if (!(spec.min_segment_m > 0.0) || spec.max_segment_m < spec.min_segment_m)
    throw ConfigError("generator segment lengths are inconsistent");
  if (!(spec.min_knot_spacing_m > 0.0) || spec.max_knot_spacing_m < spec.min_knot_spacing_m)
    throw ConfigError("generator knot spacings are inconsistent");

  std::mt19937_64 rng(seed);
  const auto n = static_cast<std::size_t>(std::floor(spec.length_m / spec.delta_s + 1e-9)) + 1;
  const auto min_count = static_cast<std::size_t>(std::max(1.0, std::ceil(spec.min_segment_m / spec.delta_s - 1e-9)));
  const auto max_count =
      std::max(min_count, static_cast<std::size_t>(std::floor(spec.max_segment_m / spec.delta_s + 1e-9)));

  DrivingCycle c;
  c.delta_s = spec.delta_s;
  c.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) c.samples[i].s = static_cast<double>(i) * spec.delta_s;

  // Speed segments.
  std::size_t previous = spec.speeds_kmh.size();
  std::size_t i = 0;
  while (i < n) {
    std::size_t pick = detail::uniform_index(rng, spec.speeds_kmh.size());
    if (spec.speeds_kmh.size() > 1) {
      while (pick == previous) pick = detail::uniform_index(rng, spec.speeds_kmh.size());
    }
    previous = pick;
    const std::size_t count = min_count + detail::uniform_index(rng, max_count - min_count + 1);
    const double v = kmh_to_mps(spec.speeds_kmh[pick]);
    for (std::size_t k = i; k < std::min(n, i + count); ++k) c.samples[k].v_ref = v;
    i += count;
  }

  // Grade as linear ramps between random knots.
  double knot_s = 0.0;
  double knot_g = detail::uniform(rng, -spec.grade_bound, spec.grade_bound);
  double next_s = knot_s + detail::uniform(rng, spec.min_knot_spacing_m, spec.max_knot_spacing_m);
  double next_g = detail::uniform(rng, -spec.grade_bound, spec.grade_bound);
  for (auto& x : c.samples) {
    while (x.s > next_s) {
      knot_s = next_s;
      knot_g = next_g;
      next_s = knot_s + detail::uniform(rng, spec.min_knot_spacing_m, spec.max_knot_spacing_m);
      next_g = detail::uniform(rng, -spec.grade_bound, spec.grade_bound);
    }
    const double t = (x.s - knot_s) / (next_s - knot_s);
    x.grade = std::clamp(knot_g + t * (next_g - knot_g), -spec.grade_bound, spec.grade_bound);
  }
  return c;
}

}  // namespace freewheel
