#include "carve/csv.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "carve/errors.hpp"

namespace carve {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.emplace_back();
    return fields;
}

double parse_number(const std::string& text, size_t row) {
    const char* begin = text.c_str();
    char* end = nullptr;
    double value = std::strtod(begin, &end);
    while (end && *end == ' ') ++end;
    if (end == begin || (end && *end != '\0')) {
        throw DataError("CSV row " + std::to_string(row) + ": not a number: '" + text + "'");
    }
    return value;
}

}  // namespace

std::string format_double(double value) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

Dataset read_dataset_csv(std::istream& in, const std::string& study_id) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();

    const auto header = split_line(line);
    if (header.empty() || header[0] != "y") {
        throw DataError("CSV header must start with 'y'");
    }
    size_t s = 0;
    size_t idx = 1;
    while (idx < header.size() && header[idx] == "d" + std::to_string(s + 1)) {
        ++s;
        ++idx;
    }
    if (s == 0) throw DataError("CSV header must contain treatment columns d1..ds");
    size_t p = 0;
    while (idx < header.size() && header[idx] == "x" + std::to_string(p + 1)) {
        ++p;
        ++idx;
    }
    if (idx != header.size()) {
        throw DataError("CSV header must be y,d1..ds,x1..xp; unexpected column '" + header[idx] + "'");
    }

    const size_t width = 1 + s + p;
    std::vector<double> values;
    size_t rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != width) {
            throw DataError("CSV row " + std::to_string(rows + 1) + ": expected " +
                            std::to_string(width) + " fields, got " + std::to_string(fields.size()));
        }
        for (const auto& f : fields) values.push_back(parse_number(f, rows + 1));
        ++rows;
    }
    if (rows == 0) throw DataError("CSV contains no data rows");

    Dataset data;
    data.study_id = study_id;
    data.y.resize(static_cast<Eigen::Index>(rows));
    data.d.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(s));
    data.x.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
    for (size_t i = 0; i < rows; ++i) {
        const double* row = values.data() + i * width;
        data.y[static_cast<Eigen::Index>(i)] = row[0];
        for (size_t j = 0; j < s; ++j) data.d(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[1 + j];
        for (size_t j = 0; j < p; ++j) data.x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[1 + s + j];
    }
    return data;
}

Dataset read_dataset_csv_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);
    std::string stem = path;
    const auto slash = stem.find_last_of('/');
    if (slash != std::string::npos) stem = stem.substr(slash + 1);
    const auto dot = stem.find('.');
    if (dot != std::string::npos) stem = stem.substr(0, dot);
    return read_dataset_csv(in, stem);
}

void write_dataset_csv(std::ostream& out, const Dataset& data) {
    out << "y";
    for (Eigen::Index j = 0; j < data.s(); ++j) out << ",d" << (j + 1);
    for (Eigen::Index j = 0; j < data.p(); ++j) out << ",x" << (j + 1);
    out << "\n";
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        out << format_double(data.y[i]);
        for (Eigen::Index j = 0; j < data.s(); ++j) out << ',' << format_double(data.d(i, j));
        for (Eigen::Index j = 0; j < data.p(); ++j) out << ',' << format_double(data.x(i, j));
        out << "\n";
    }
}

void write_dataset_csv_file(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    write_dataset_csv(out, data);
}

}  // namespace carve
