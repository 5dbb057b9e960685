#pragma once

#include <charconv>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace softhjb {

// Minimal CSV writer. Doubles are written with shortest round-trip
// formatting so files reload bit-exactly.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& columns)
        : out_(path), ncols_(columns.size()) {
        if (!out_) throw std::runtime_error("cannot open csv for writing: " + path);
        for (std::size_t i = 0; i < columns.size(); ++i) {
            if (i) out_ << ',';
            out_ << columns[i];
        }
        out_ << '\n';
    }

    void row(const std::vector<double>& values) {
        if (values.size() != ncols_)
            throw std::invalid_argument("csv row width mismatch");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (i) out_ << ',';
            out_ << format(values[i]);
        }
        out_ << '\n';
    }

    void flush() { out_.flush(); }

    static std::string format(double v) {
        char buf[32];
        auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
        (void)ec;
        return std::string(buf, p);
    }

private:
    std::ofstream out_;
    std::size_t ncols_;
};

}  // namespace softhjb
