#include "kmgan/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace kmgan {

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::size_t CsvTable::column(const std::string& name) const {
    for (std::size_t i = 0; i < header_.size(); ++i)
        if (header_[i] == name) return i;
    throw std::out_of_range("CSV has no column '" + name + "'");
}

void CsvTable::add_row(std::vector<double> row) {
    if (row.size() != header_.size())
        throw std::invalid_argument("CSV row has " + std::to_string(row.size()) + " fields, header has " +
                                    std::to_string(header_.size()));
    rows_.push_back(std::move(row));
}

std::string CsvTable::to_string() const {
    std::string out;
    for (std::size_t i = 0; i < header_.size(); ++i) {
        if (i) out += ',';
        out += header_[i];
    }
    out += '\n';
    for (const auto& row : rows_) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) out += ',';
            out += format_double(row[i]);
        }
        out += '\n';
    }
    return out;
}

void CsvTable::write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
    out << to_string();
    if (!out) throw std::runtime_error("failed writing " + path.string());
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    return fields;
}

}  // namespace

CsvTable CsvTable::parse(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("CSV is empty");
    CsvTable t(split(line));
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = split(line);
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) {
            double v = 0.0;
            auto res = std::from_chars(f.data(), f.data() + f.size(), v);
            if (res.ec != std::errc() || res.ptr != f.data() + f.size())
                throw std::runtime_error("CSV line " + std::to_string(lineno) + ": bad number '" + f + "'");
            row.push_back(v);
        }
        if (row.size() != t.header_.size())
            throw std::runtime_error("CSV line " + std::to_string(lineno) + ": wrong field count");
        t.rows_.push_back(std::move(row));
    }
    return t;
}

CsvTable CsvTable::read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

}  // namespace kmgan
