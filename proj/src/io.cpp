#include "amcmc/io.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <stdexcept>

namespace amcmc {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    return out;
}

}  // namespace

std::string format_double(double v) {
    std::array<char, 32> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc()) throw std::runtime_error("format_double failed");
    return {buf.data(), ptr};
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<TraceRow>& rows,
                     const std::vector<Index>& coords) {
    auto out = open_out(path);
    out << "iter,log_pi,acceptance_rate_window,sigma";
    for (Index c : coords) out << ",x" << c;
    out << '\n';
    for (const auto& r : rows) {
        out << r.iter << ',' << format_double(r.log_pi) << ',' << format_double(r.acceptance_rate) << ','
            << format_double(r.sigma);
        for (double v : r.coords) out << ',' << format_double(v);
        out << '\n';
    }
}

void write_series_csv(const std::filesystem::path& path, const std::string& value_name,
                      const std::vector<SeriesPoint>& series) {
    auto out = open_out(path);
    out << "iter," << value_name << '\n';
    for (const auto& p : series) out << p.iter << ',' << format_double(p.value) << '\n';
}

void write_timings_csv(const std::filesystem::path& path, const std::vector<TimingResult>& rows) {
    auto out = open_out(path);
    out << "component,n,mean_ns\n";
    for (const auto& r : rows) out << r.component << ',' << r.n << ',' << format_double(r.mean_ns) << '\n';
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    auto out = open_out(path);
    out << j.dump(1) << '\n';
}

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    return nlohmann::json::parse(in);
}

}  // namespace amcmc
