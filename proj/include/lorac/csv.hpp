#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lorac/tensor.hpp"

// Plain comma-separated tables; cells never contain commas or quotes here.
namespace lorac::csv {

using Table = std::vector<std::vector<std::string>>;

inline std::string join_row(const std::vector<std::string>& cells) {
    std::string out;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i) out += ",";
        out += cells[i];
    }
    return out;
}

inline std::string to_string(const Table& rows) {
    std::string out;
    for (const auto& row : rows) {
        out += join_row(row);
        out += "\n";
    }
    return out;
}

inline Table parse(const std::string& text) {
    Table rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        rows.push_back(std::move(cells));
    }
    return rows;
}

inline void write_file(const std::string& path, const Table& rows) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot open for write: " + path);
    f << to_string(rows);
    if (!f) throw IoError("write failed: " + path);
}

inline Table read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return parse(ss.str());
}

}  // namespace lorac::csv
