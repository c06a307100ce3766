#include "gwinfer/io.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "gwinfer/common.hpp"

namespace gwinfer::io {

void atomic_write(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        require(out.good(), "io-error", "cannot open " + tmp.string());
        out << content;
        out.flush();
        require(out.good(), "io-error", "write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), "io-error", "cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Table read_csv(const std::filesystem::path& path) {
    const std::string text = read_file(path);
    std::istringstream in(text);
    std::string line;
    Table table;
    require(static_cast<bool>(std::getline(in, line)), "io-error", "empty CSV " + path.string());
    {
        std::istringstream hs(line);
        std::string tok;
        while (std::getline(hs, tok, ',')) table.header.push_back(tok);
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream rs(line);
        std::string tok;
        std::vector<double> row;
        while (std::getline(rs, tok, ',')) {
            // strtod accepts subnormals that std::stod rejects as out-of-range
            char* end = nullptr;
            const double v = std::strtod(tok.c_str(), &end);
            require(end != tok.c_str(), "io-error", "non-numeric CSV token '" + tok + "'");
            row.push_back(v);
        }
        require(row.size() == table.header.size(), "io-error",
                "ragged CSV row in " + path.string());
        rows.push_back(std::move(row));
    }
    table.rows.resize(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            table.rows(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return table;
}

std::string to_csv(const std::vector<std::string>& header, const Eigen::MatrixXd& rows) {
    std::ostringstream out;
    out.precision(17);
    for (std::size_t c = 0; c < header.size(); ++c)
        out << header[c] << (c + 1 < header.size() ? "," : "");
    out << "\n";
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
        for (Eigen::Index c = 0; c < rows.cols(); ++c)
            out << rows(r, c) << (c + 1 < rows.cols() ? "," : "");
        out << "\n";
    }
    return out.str();
}

std::uint64_t fnv1a(const std::string& text) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        hash ^= ch;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

} // namespace gwinfer::io
