#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "amcmc/diagnostics.hpp"
#include "amcmc/samplers.hpp"
#include "json.hpp"

namespace amcmc {

/// Shortest round-trip decimal form.
std::string format_double(double v);

/// iter,log_pi,acceptance_rate_window,sigma,x<c>...
void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows,
                     const std::vector<Index>& coords);
/// Two-column series with the given header names.
void write_series_csv(const std::filesystem::path& path, const std::string& value_name,
                      const std::vector<SeriesPoint>& series);
/// component,n,mean_ns
void write_timings_csv(const std::filesystem::path& path, const std::vector<TimingResult>& rows);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

}  // namespace amcmc
