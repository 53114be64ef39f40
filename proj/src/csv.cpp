#include "gnnstab/csv.hpp"

#include <array>
#include <charconv>
#include <string>

#include "gnnstab/error.hpp"

namespace gnnstab::csv {

std::string format(double value) {
    std::array<char, 64> buf{};
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), value);
    if (ec != std::errc{}) {
        throw Error("csv::format: conversion failed");
    }
    return std::string(buf.data(), ptr);
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

double parse_double(std::string_view field, long line) {
    field = trim(field);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
        throw ParseError("line " + std::to_string(line) + ": expected a number, got '" +
                             std::string(field) + "'",
                         line);
    }
    return value;
}

long long parse_integer(std::string_view field, long line) {
    field = trim(field);
    long long value = 0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), value);
    if (ec != std::errc{} || ptr != field.data() + field.size() || field.empty()) {
        throw ParseError("line " + std::to_string(line) + ": expected an integer, got '" +
                             std::string(field) + "'",
                         line);
    }
    return value;
}

}  // namespace gnnstab::csv
