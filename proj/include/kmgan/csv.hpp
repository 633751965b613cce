#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace kmgan {

/// Numeric CSV with one header row. Values are written with 17 significant
/// digits so they read back bit-exactly.
class CsvTable {
public:
    CsvTable() = default;
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }
    std::size_t column(const std::string& name) const;

    void add_row(std::vector<double> row);
    double at(std::size_t row, std::size_t col) const { return rows_.at(row).at(col); }
    const std::vector<double>& row(std::size_t r) const { return rows_.at(r); }

    std::string to_string() const;
    void write(const std::filesystem::path& path) const;
    static CsvTable parse(const std::string& text);
    static CsvTable read(const std::filesystem::path& path);

private:
    std::vector<std::string> header_;
    std::vector<std::vector<double>> rows_;
};

std::string format_double(double v);

}  // namespace kmgan
