#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pipefuse {

using Tick = std::uint64_t;

enum class SensorKind { pressure, temperature, humidity, pir, magnetic };

inline constexpr SensorKind kAllSensorKinds[] = {SensorKind::pressure, SensorKind::temperature,
                                                 SensorKind::humidity, SensorKind::pir,
                                                 SensorKind::magnetic};

std::string_view to_string(SensorKind kind);
SensorKind parse_sensor_kind(std::string_view name);

/// pir and magnetic channels carry presence flags (0/1); the rest are analog.
constexpr bool is_binary(SensorKind kind) {
  return kind == SensorKind::pir || kind == SensorKind::magnetic;
}

struct Measurement {
  std::string node_id;
  SensorKind kind = SensorKind::pressure;
  Tick tick = 0;
  double value = 0.0;

  bool operator==(const Measurement&) const = default;
};

struct Sample {
  Tick tick = 0;
  double value = 0.0;

  bool operator==(const Sample&) const = default;
};

/// Readings of one sensor on one node. Non-empty, strictly increasing ticks,
/// and binary channels hold exactly 0 or 1.
class Trace {
 public:
  /// Throws Error(empty_input | non_monotone | parse) when the invariants fail.
  Trace(std::string node_id, SensorKind kind, std::vector<Sample> samples);

  const std::string& node_id() const noexcept { return node_id_; }
  SensorKind kind() const noexcept { return kind_; }
  std::span<const Sample> samples() const noexcept { return samples_; }
  std::size_t size() const noexcept { return samples_.size(); }
  Measurement measurement(std::size_t i) const;

  bool operator==(const Trace&) const = default;

 private:
  std::string node_id_;
  SensorKind kind_;
  std::vector<Sample> samples_;
};

/// Parses a `timestamp,value` CSV. Rows are numbered from 1 after the header.
Trace parse_trace(std::istream& in, std::string node_id, SensorKind kind);
Trace load_trace(const std::filesystem::path& path, std::string node_id, SensorKind kind);

void write_trace(std::ostream& out, const Trace& trace);
void save_trace(const std::filesystem::path& path, const Trace& trace);

struct TickSet {
  Tick tick = 0;
  /// One entry per input trace that has a reading at `tick`, in input order.
  std::vector<Measurement> readings;
};

/// Time-aligns same-kind traces. No interpolation: a trace without a reading
/// at some tick simply contributes nothing there.
std::vector<TickSet> merge_traces(std::span<const Trace> traces);

/// Shortest decimal text that reads back to the same double.
std::string format_number(double value);

}  // namespace pipefuse
