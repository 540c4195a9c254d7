#include "pipefuse/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>

#include "pipefuse/error.hpp"

namespace pipefuse {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_full(std::string_view text, T& out) {
  text = trim(text);
  if (text.empty()) return false;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if constexpr (std::is_floating_point_v<T>) {
    if (*first == '+') ++first;
  }
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

std::string_view to_string(SensorKind kind) {
  switch (kind) {
    case SensorKind::pressure: return "pressure";
    case SensorKind::temperature: return "temperature";
    case SensorKind::humidity: return "humidity";
    case SensorKind::pir: return "pir";
    case SensorKind::magnetic: return "magnetic";
  }
  return "unknown";
}

SensorKind parse_sensor_kind(std::string_view name) {
  for (SensorKind k : kAllSensorKinds) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorKind::parse, "unknown sensor kind '" + std::string(name) + "'");
}

Trace::Trace(std::string node_id, SensorKind kind, std::vector<Sample> samples)
    : node_id_(std::move(node_id)), kind_(kind), samples_(std::move(samples)) {
  if (samples_.empty()) {
    throw Error(ErrorKind::empty_input, "trace for node '" + node_id_ + "' has no readings");
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (i > 0 && samples_[i].tick <= samples_[i - 1].tick) {
      throw Error(ErrorKind::non_monotone,
                  "timestamp " + std::to_string(samples_[i].tick) + " at row " +
                      std::to_string(i + 1) + " does not follow " +
                      std::to_string(samples_[i - 1].tick),
                  i + 1);
    }
    const double v = samples_[i].value;
    if (is_binary(kind_) && v != 0.0 && v != 1.0) {
      throw Error(ErrorKind::parse,
                  std::string(to_string(kind_)) + " reading at row " + std::to_string(i + 1) +
                      " must be 0 or 1",
                  i + 1);
    }
  }
}

Measurement Trace::measurement(std::size_t i) const {
  return Measurement{node_id_, kind_, samples_.at(i).tick, samples_.at(i).value};
}

Trace parse_trace(std::istream& in, std::string node_id, SensorKind kind) {
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) {
      have_header = true;
      break;
    }
  }
  if (!have_header) throw Error(ErrorKind::empty_input, "trace file is empty");

  std::string_view header = trim(line);
  if (header.size() >= 3 && header.substr(0, 3) == "\xEF\xBB\xBF") header.remove_prefix(3);
  if (header != "timestamp,value") {
    throw Error(ErrorKind::parse, "expected header 'timestamp,value', got '" + std::string(header) + "'", 0);
  }

  std::vector<Sample> samples;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    std::string_view text = trim(line);
    if (text.empty()) continue;
    ++row;
    const auto comma = text.find(',');
    Sample s;
    if (comma == std::string_view::npos || !parse_full(text.substr(0, comma), s.tick) ||
        !parse_full(text.substr(comma + 1), s.value) || !std::isfinite(s.value)) {
      throw Error(ErrorKind::parse, "malformed row " + std::to_string(row) + ": '" + std::string(text) + "'",
                  row);
    }
    samples.push_back(s);
  }
  if (samples.empty()) throw Error(ErrorKind::empty_input, "trace file has a header but no readings");
  return Trace(std::move(node_id), kind, std::move(samples));
}

Trace load_trace(const std::filesystem::path& path, std::string node_id, SensorKind kind) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::io, "cannot open trace file " + path.string());
  try {
    return parse_trace(in, std::move(node_id), kind);
  } catch (const Error& e) {
    throw e.with_context(path.string());
  }
}

void write_trace(std::ostream& out, const Trace& trace) {
  out << "timestamp,value\n";
  for (const Sample& s : trace.samples()) out << s.tick << ',' << format_number(s.value) << '\n';
}

void save_trace(const std::filesystem::path& path, const Trace& trace) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::io, "cannot write trace file " + path.string());
  write_trace(out, trace);
}

std::vector<TickSet> merge_traces(std::span<const Trace> traces) {
  if (traces.empty()) return {};
  const SensorKind kind = traces.front().kind();
  for (const Trace& t : traces) {
    if (t.kind() != kind) {
      throw Error(ErrorKind::kind_mismatch, "cannot merge " + std::string(to_string(kind)) + " with " +
                                                std::string(to_string(t.kind())) + " traces");
    }
  }
  std::map<Tick, std::vector<Measurement>> by_tick;
  for (const Trace& t : traces) {
    for (std::size_t i = 0; i < t.size(); ++i) by_tick[t.samples()[i].tick].push_back(t.measurement(i));
  }
  std::vector<TickSet> merged;
  merged.reserve(by_tick.size());
  for (auto& [tick, readings] : by_tick) merged.push_back(TickSet{tick, std::move(readings)});
  return merged;
}

std::string format_number(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

}  // namespace pipefuse
