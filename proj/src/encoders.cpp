#include "bastext/encoders.hpp"

#include <charconv>
#include <fstream>

namespace bastext {

EncoderKind parse_encoder_kind(std::string_view name) {
    if (name == "mov") return EncoderKind::mov;
    if (name == "cnn") return EncoderKind::cnn;
    throw Error(fmt::format("unknown encoder '{}' (expected mov or cnn)", name));
}

std::string_view to_string(EncoderKind kind) { return kind == EncoderKind::mov ? "mov" : "cnn"; }

PretrainedVectors load_pretrained_vectors(const std::filesystem::path& path, const Vocabulary& vocabulary) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open pretrained vectors '{}'", path.string()));
    PretrainedVectors result;
    std::vector<char> seen(vocabulary.size(), 0);
    std::vector<double> values;
    std::string line;
    Eigen::Index dim = -1;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto firstSpace = line.find_first_of(" \t");
        if (line.empty() || firstSpace == std::string::npos) continue;
        const std::string_view word(line.data(), firstSpace);
        values.clear();
        const char* p = line.data() + firstSpace;
        const char* end = line.data() + line.size();
        while (p < end) {
            while (p < end && (*p == ' ' || *p == '\t')) ++p;
            if (p == end) break;
            double v = 0;
            auto [next, ec] = std::from_chars(p, end, v);
            if (ec != std::errc())
                throw Error(fmt::format("'{}' line {}: unparsable number", path.string(), lineNo));
            values.push_back(v);
            p = next;
        }
        if (dim < 0) {
            dim = static_cast<Eigen::Index>(values.size());
            if (dim == 0) throw Error(fmt::format("'{}' line {}: no vector components", path.string(), lineNo));
            result.vectors = Matrix<double>::Zero(static_cast<Eigen::Index>(vocabulary.size()), dim);
        } else if (static_cast<Eigen::Index>(values.size()) != dim) {
            throw Error(fmt::format("'{}' line {}: dimension {} differs from {}", path.string(), lineNo, values.size(), dim));
        }
        const TokenId id = vocabulary.index(word);
        if (id == vocabulary.unk() || seen[static_cast<std::size_t>(id)]) continue;
        seen[static_cast<std::size_t>(id)] = 1;
        ++result.matched;
        for (Eigen::Index k = 0; k < dim; ++k) result.vectors(id, k) = values[static_cast<std::size_t>(k)];
    }
    if (result.matched == 0) throw Error(fmt::format("no vocabulary word found in '{}'", path.string()));
    result.coverage = static_cast<double>(result.matched) / static_cast<double>(vocabulary.size());
    return result;
}

} // namespace bastext
