// csv.hpp: rectangular numeric CSV tables with a single header row

#pragma once

#include <charconv>
#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "lgr/config.hpp"

namespace lgr {

class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column_index(std::string_view name) const {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return k;
        throw CsvError("CSV has no column '" + std::string(name) + "'");
    }
    bool has_column(std::string_view name) const {
        for (const auto& h : header)
            if (h == name) return true;
        return false;
    }
    std::vector<double> column(std::string_view name) const {
        const auto k = column_index(name);
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r[k]);
        return out;
    }
};

class CsvWriter {
public:
    CsvWriter(std::ostream& os, std::vector<std::string> header) : os_(os), width_(header.size()) {
        if (header.empty()) throw std::invalid_argument("CSV header must not be empty");
        for (std::size_t k = 0; k < header.size(); ++k) os_ << (k ? "," : "") << header[k];
        os_ << '\n';
    }

    void row(std::initializer_list<double> values) { row(std::vector<double>(values)); }

    void row(const std::vector<double>& values) {
        if (values.size() != width_)
            throw std::logic_error("CSV row has " + std::to_string(values.size()) + " fields, expected " + std::to_string(width_));
        for (std::size_t k = 0; k < values.size(); ++k) os_ << (k ? "," : "") << format_double(values[k]);
        os_ << '\n';
    }

private:
    std::ostream& os_;
    std::size_t width_;
};

inline CsvTable read_csv(std::istream& is) {
    CsvTable t;
    std::string line;
    int line_no = 0;
    auto split = [](std::string_view s) {
        std::vector<std::string_view> out;
        std::size_t start = 0;
        while (true) {
            const auto comma = s.find(',', start);
            out.push_back(detail::trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
            if (comma == std::string_view::npos) break;
            start = comma + 1;
        }
        return out;
    };
    while (std::getline(is, line)) {
        ++line_no;
        const auto view = detail::trim(line);
        if (view.empty()) continue;
        const auto fields = split(view);
        if (t.header.empty()) {
            for (const auto f : fields) {
                if (f.empty()) throw CsvError("line " + std::to_string(line_no) + ": empty column name in header");
                t.header.emplace_back(f);
            }
            continue;
        }
        if (fields.size() != t.header.size())
            throw CsvError("line " + std::to_string(line_no) + ": expected " + std::to_string(t.header.size()) +
                           " fields, found " + std::to_string(fields.size()));
        std::vector<double> row;
        row.reserve(fields.size());
        for (std::size_t k = 0; k < fields.size(); ++k) {
            const auto f = fields[k];
            double v = 0.0;
            const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (f.empty() || ec != std::errc() || p != f.data() + f.size() || !std::isfinite(v))
                throw CsvError("line " + std::to_string(line_no) + ", column '" + t.header[k] + "': not a number: '" +
                               std::string(f) + "'");
            row.push_back(v);
        }
        t.rows.push_back(std::move(row));
    }
    if (t.header.empty()) throw CsvError("CSV input is empty");
    return t;
}

}  // namespace lgr
