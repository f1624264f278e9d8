#pragma once

#include <qts/errors.hpp>

#include <charconv>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

namespace qts::csv {

/// Shortest decimal that round-trips the binary64 value.
inline std::string format(double x) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    if (res.ec != std::errc{}) throw Error("failed to format a double");
    return std::string(buf, res.ptr);
}

/// Minimal CSV emitter: header row, then one row per record.
class Writer {
public:
    explicit Writer(const std::string& path) : out_(path) {
        if (!out_) throw Error("cannot open " + path + " for writing");
        path_ = path;
    }

    void header(const std::vector<std::string>& names) { line(names); }

    void row(const std::vector<std::string>& fields) { line(fields); }

    ~Writer() { out_.flush(); }

private:
    void line(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
        if (!out_) throw Error("write failed on " + path_);
    }
    std::ofstream out_;
    std::string path_;
};

} // namespace qts::csv
