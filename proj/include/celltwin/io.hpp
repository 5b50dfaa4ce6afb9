#pragma once

#include "celltwin/error.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace celltwin::io
{

/// Shortest decimal text that round-trips to the same double.
inline std::string format_double(double value)
{
    if (std::isnan(value))
        return "nan";
    if (std::isinf(value))
        return value > 0 ? "inf" : "-inf";
    char buffer[64];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
    return std::string(buffer, result.ptr);
}

inline std::string_view trim(std::string_view text)
{
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos)
        return {};
    const auto last = text.find_last_not_of(" \t\r\n");
    return text.substr(first, last - first + 1);
}

inline std::vector<std::string_view> split_fields(std::string_view line, char sep = ',')
{
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true)
    {
        const auto pos = line.find(sep, start);
        fields.push_back(trim(line.substr(start, pos == std::string_view::npos ? pos : pos - start)));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return fields;
}

inline std::optional<double> parse_double(std::string_view text)
{
    double value = 0.0;
    const auto* end = text.data() + text.size();
    const auto result = std::from_chars(text.data(), end, value);
    if (text.empty() || result.ec != std::errc{} || result.ptr != end)
        return std::nullopt;
    return value;
}

inline std::optional<long long> parse_int(std::string_view text)
{
    long long value = 0;
    const auto* end = text.data() + text.size();
    const auto result = std::from_chars(text.data(), end, value);
    if (text.empty() || result.ec != std::errc{} || result.ptr != end)
        return std::nullopt;
    return value;
}

inline std::string read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("UnreadableFile", "cannot open '" + path.string() + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

/// Writes to a sibling temporary file and renames it over the target.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content)
{
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw RuntimeError("WriteFailed", "cannot write '" + tmp.string() + "'");
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out)
            throw RuntimeError("WriteFailed", "short write to '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec)
        throw RuntimeError("WriteFailed", "cannot rename '" + tmp.string() + "': " + ec.message());
}

/// Minimal CSV text builder; fields are numbers or identifiers without separators.
class CsvWriter
{
  public:
    explicit CsvWriter(const std::vector<std::string>& header) { row(header); }

    template <typename... Fields>
    void add(const Fields&... fields)
    {
        bool first = true;
        ((emit(fields, first)), ...);
        text_ += '\n';
    }

    void row(const std::vector<std::string>& fields)
    {
        for (std::size_t i = 0; i < fields.size(); ++i)
        {
            if (i)
                text_ += ',';
            text_ += fields[i];
        }
        text_ += '\n';
    }

    const std::string& str() const { return text_; }

  private:
    template <typename T>
    void emit(const T& value, bool& first)
    {
        if (!first)
            text_ += ',';
        first = false;
        if constexpr (std::is_floating_point_v<T>)
            text_ += format_double(static_cast<double>(value));
        else if constexpr (std::is_integral_v<T>)
            text_ += std::to_string(value);
        else if constexpr (std::is_same_v<T, std::vector<double>>)
        {
            for (std::size_t i = 0; i < value.size(); ++i)
            {
                if (i)
                    text_ += ',';
                text_ += format_double(value[i]);
            }
        }
        else
            text_ += std::string_view(value);
    }

    std::string text_;
};

/// Column label for a probability level: 0.05 -> "q05", 0.95 -> "q95", 0.025 -> "q2.5".
inline std::string quantile_label(double level, std::string_view prefix = "q")
{
    const double pct = level * 100.0;
    const double rounded = std::round(pct);
    std::string label(prefix);
    if (std::abs(pct - rounded) < 1e-9)
    {
        const auto whole = static_cast<long long>(rounded);
        if (whole < 10)
            label += '0';
        label += std::to_string(whole);
    }
    else
        label += format_double(pct);
    return label;
}

} // namespace celltwin::io
