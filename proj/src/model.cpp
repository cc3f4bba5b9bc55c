#include "bastext/model.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <tuple>

namespace bastext {

void ModelConfig::validate() const {
    if (embeddingSize < 1) throw Error("embedding size K must be at least 1");
    if (negatives < 1) throw Error("negative ratio n must be at least 1");
    if (batchSize < 1) throw Error("batch size must be at least 1");
    if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("dropout rate must lie in [0, 1)");
    if (!(learningRate > 0.0)) throw Error("learning rate must be positive");
    if (epochs < 1) throw Error("epochs must be at least 1");
    if (patience < 1) throw Error("patience must be at least 1");
    if (fineTuneInputs && !pretrained) throw Error("fine-tuning inputs requires pretrained vectors");
    if (encoder == EncoderKind::cnn) cnn.validate();
}

std::string TrainingLog::format_line(const EpochRecord& r) {
    const std::string recall = r.validationRecall < 0 ? std::string("na") : fmt::format("{:.6f}", r.validationRecall);
    return fmt::format("epoch={} loss={:.6f} val_recall20={} seconds={:.3f}", r.epoch, r.meanLoss, recall, r.seconds);
}

ValidationCases sample_validation_cases(std::span<const Basket> baskets, std::size_t cap, std::uint64_t seed) {
    struct Ref {
        std::uint32_t basket, position;
    };
    std::vector<Ref> refs;
    for (std::size_t b = 0; b < baskets.size(); ++b)
        if (baskets[b].size() >= 2)
            for (std::size_t k = 0; k < baskets[b].size(); ++k)
                refs.push_back({static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(k)});
    if (refs.size() > cap) {
        auto rng = CounterRng::keyed(seed, 0x76616cULL /* val */);
        shuffle(std::span(refs), rng);
        refs.resize(cap);
    }
    ValidationCases cases;
    for (const auto& r : refs) {
        const auto& ids = baskets[r.basket].productIds;
        std::vector<ProductId> context;
        for (std::size_t j = 0; j < ids.size(); ++j)
            if (j != r.position) context.push_back(ids[j]);
        cases.contexts.push_back(std::move(context));
        cases.heldOut.push_back(ids[r.position]);
    }
    return cases;
}

namespace {

constexpr char kMagic[4] = {'B', 'S', 'T', 'X'};

class Writer {
public:
    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
            auto bytes = std::bit_cast<std::array<char, sizeof(T)>>(value);
            std::reverse(bytes.begin(), bytes.end());
            out_.append(bytes.data(), sizeof(T));
        } else {
            char bytes[sizeof(T)];
            std::memcpy(bytes, &value, sizeof(T));
            out_.append(bytes, sizeof(T));
        }
    }
    void put_string(std::string_view s) {
        put(static_cast<std::uint32_t>(s.size()));
        out_.append(s);
    }
    void raw(std::string_view s) { out_.append(s); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(std::string_view bytes) : bytes_(bytes) {}

    template <typename T>
    T get() {
        need(sizeof(T));
        std::array<char, sizeof(T)> buf;
        std::memcpy(buf.data(), bytes_.data() + pos_, sizeof(T));
        pos_ += sizeof(T);
        if constexpr (std::endian::native == std::endian::big) std::reverse(buf.begin(), buf.end());
        return std::bit_cast<T>(buf);
    }
    std::string get_string() {
        const auto n = get<std::uint32_t>();
        need(n);
        std::string s(bytes_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    std::string_view raw(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) throw Error("model file is truncated");
    }
    std::string_view bytes_;
    std::size_t pos_ = 0;
};

void write_config(Writer& w, const ModelConfig& c) {
    w.put(static_cast<std::uint32_t>(c.encoder));
    w.put(static_cast<std::uint32_t>(c.embeddingSize));
    w.put(static_cast<std::uint32_t>(c.negatives));
    w.put(static_cast<std::uint8_t>(c.pretrained));
    w.put(static_cast<std::uint8_t>(c.fineTuneInputs));
    w.put(static_cast<std::uint8_t>(c.useBias));
    w.put(static_cast<std::uint32_t>(c.cnn.widths.size()));
    for (int width : c.cnn.widths) w.put(static_cast<std::uint32_t>(width));
    w.put(static_cast<std::uint32_t>(c.cnn.filters));
    w.put(static_cast<std::uint64_t>(c.batchSize));
    w.put(c.learningRate);
    w.put(c.adamBeta1);
    w.put(c.adamBeta2);
    w.put(c.adamEps);
    w.put(c.dropout);
    w.put(static_cast<std::uint32_t>(c.epochs));
    w.put(static_cast<std::uint32_t>(c.patience));
    w.put(c.seed);
    w.put(static_cast<std::uint64_t>(c.validationCases));
}

ModelConfig read_config(Reader& r) {
    ModelConfig c;
    const auto kind = r.get<std::uint32_t>();
    if (kind > 1) throw Error("model file has an unknown encoder kind");
    c.encoder = static_cast<EncoderKind>(kind);
    c.embeddingSize = static_cast<int>(r.get<std::uint32_t>());
    c.negatives = static_cast<int>(r.get<std::uint32_t>());
    c.pretrained = r.get<std::uint8_t>() != 0;
    c.fineTuneInputs = r.get<std::uint8_t>() != 0;
    c.useBias = r.get<std::uint8_t>() != 0;
    const auto widths = r.get<std::uint32_t>();
    if (widths > 64) throw Error("model file declares too many CNN widths");
    c.cnn.widths.clear();
    for (std::uint32_t i = 0; i < widths; ++i) c.cnn.widths.push_back(static_cast<int>(r.get<std::uint32_t>()));
    c.cnn.filters = static_cast<int>(r.get<std::uint32_t>());
    c.batchSize = static_cast<std::size_t>(r.get<std::uint64_t>());
    c.learningRate = r.get<double>();
    c.adamBeta1 = r.get<double>();
    c.adamBeta2 = r.get<double>();
    c.adamEps = r.get<double>();
    c.dropout = r.get<double>();
    c.epochs = static_cast<int>(r.get<std::uint32_t>());
    c.patience = static_cast<int>(r.get<std::uint32_t>());
    c.seed = r.get<std::uint64_t>();
    c.validationCases = static_cast<std::size_t>(r.get<std::uint64_t>());
    c.validate();
    return c;
}

} // namespace

std::string model_bytes(const ModelState<float>& state) {
    Writer w;
    w.raw(std::string_view(kMagic, 4));
    w.put(kModelFormatVersion);
    write_config(w, state.config);
    w.put(static_cast<std::uint32_t>(state.vocabulary.size()));
    for (std::size_t i = 0; i < state.vocabulary.size(); ++i) {
        const auto id = static_cast<TokenId>(i);
        w.put_string(state.vocabulary.word(id));
        w.put(state.vocabulary.count(id));
    }
    w.put(state.catalogFingerprint);
    std::vector<std::pair<std::string, const Matrix<float>*>> tensors;
    state.params.for_each_tensor(state.config, Parameters<float>::Set::stored,
                                 [&](const std::string& name, const Matrix<float>& m) { tensors.emplace_back(name, &m); });
    w.put(static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, m] : tensors) {
        w.put_string(name);
        w.put(static_cast<std::uint32_t>(m->rows()));
        w.put(static_cast<std::uint32_t>(m->cols()));
        for (Eigen::Index i = 0; i < m->size(); ++i) w.put(m->data()[i]);
    }
    return w.take();
}

ModelState<float> parse_model(std::string_view bytes) {
    Reader r(bytes);
    if (r.raw(4) != std::string_view(kMagic, 4)) throw Error("not a model file (bad magic)");
    const auto version = r.get<std::uint32_t>();
    if (version != kModelFormatVersion)
        throw Error(fmt::format("unsupported model file version {} (expected {})", version, kModelFormatVersion));
    const auto config = read_config(r);
    Vocabulary vocabulary;
    const auto words = r.get<std::uint32_t>();
    for (std::uint32_t i = 0; i < words; ++i) {
        auto word = r.get_string();
        const auto count = r.get<std::uint64_t>();
        vocabulary.add(std::move(word), count);
    }
    const auto fingerprint = r.get<std::uint64_t>();

    const auto count = r.get<std::uint32_t>();
    std::vector<std::tuple<std::string, Eigen::Index, Eigen::Index, Matrix<float>>> tensors;
    for (std::uint32_t t = 0; t < count; ++t) {
        auto name = r.get_string();
        const auto rows = static_cast<Eigen::Index>(r.get<std::uint32_t>());
        const auto cols = static_cast<Eigen::Index>(r.get<std::uint32_t>());
        const auto payload = r.raw(static_cast<std::size_t>(rows * cols) * sizeof(float));
        Matrix<float> m(rows, cols);
        Reader values(payload);
        for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = values.get<float>();
        tensors.emplace_back(std::move(name), rows, cols, std::move(m));
    }
    if (!r.done()) throw Error("model file has trailing bytes");

    // Input dimension comes from the inputs tensor (pretrained) or the vocabulary.
    Eigen::Index inputDim = static_cast<Eigen::Index>(vocabulary.size());
    for (const auto& [name, rows, cols, m] : tensors)
        if (name == "embedding.inputs") inputDim = cols;
    // Rebuild the architecture, then overwrite every stored tensor.
    Matrix<double> placeholder;
    if (config.pretrained) placeholder = Matrix<double>::Zero(static_cast<Eigen::Index>(vocabulary.size()), inputDim);
    auto state = init_model<float>(config, vocabulary, fingerprint, config.pretrained ? &placeholder : nullptr);

    std::size_t next = 0;
    state.params.for_each_tensor(config, Parameters<float>::Set::stored, [&](const std::string& name, Matrix<float>& m) {
        if (next >= tensors.size()) throw Error(fmt::format("model file is missing tensor '{}'", name));
        auto& [storedName, rows, cols, values] = tensors[next++];
        if (storedName != name || rows != m.rows() || cols != m.cols())
            throw Error(fmt::format("model tensor '{}' ({}x{}) does not match expected '{}' ({}x{})", storedName, rows,
                                    cols, name, m.rows(), m.cols()));
        m = std::move(values);
    });
    if (next != tensors.size()) throw Error("model file has unexpected extra tensors");
    state.adam.first = state.params.zeros_like();
    state.adam.second = state.params.zeros_like();
    return state;
}

void save_model(const ModelState<float>& state, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write model '{}'", path.string()));
    const auto bytes = model_bytes(state);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(fmt::format("failed writing model '{}'", path.string()));
}

ModelState<float> load_model(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open model '{}'", path.string()));
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return parse_model(bytes);
}

} // namespace bastext
