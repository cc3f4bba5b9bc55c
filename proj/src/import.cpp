#include <algorithm>
#include <fstream>
#include <iostream>
#include <unordered_map>

#include <fmt/format.h>

#include "bastext/corpus.hpp"

namespace bastext {
namespace {

// Products and transactions as read from disk, before tokenization and
// filtering. Transactions reference products by raw index.
struct RawDataset {
    std::vector<std::string> externalIds;
    std::vector<std::string> titles;
    std::unordered_map<std::string, std::int32_t> index;
    std::vector<std::vector<std::int32_t>> transactions;
    std::vector<std::string> sourceIds;
    std::size_t malformedRows = 0;

    std::int32_t intern(const std::string& externalId) {
        auto [it, inserted] = index.try_emplace(externalId, static_cast<std::int32_t>(externalIds.size()));
        if (inserted) {
            externalIds.push_back(externalId);
            titles.emplace_back();
        }
        return it->second;
    }
};

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(fmt::format("cannot open '{}'", path.string()));
    return in;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
    std::vector<std::string_view> parts;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        const std::size_t start = i;
        while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
        if (i > start) parts.push_back(line.substr(start, i - start));
    }
    return parts;
}

// RFC 4180 record reader: quoted fields may contain commas, doubled quotes
// and newlines.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    bool next(std::vector<std::string>& fields) {
        fields.clear();
        std::string line;
        if (!std::getline(in_, line)) return false;
        strip_cr(line);
        std::string field;
        bool quoted = false;
        for (;;) {
            for (std::size_t i = 0; i < line.size(); ++i) {
                const char c = line[i];
                if (quoted) {
                    if (c == '"') {
                        if (i + 1 < line.size() && line[i + 1] == '"') {
                            field.push_back('"');
                            ++i;
                        } else {
                            quoted = false;
                        }
                    } else {
                        field.push_back(c);
                    }
                } else if (c == '"') {
                    quoted = true;
                } else if (c == ',') {
                    fields.push_back(std::move(field));
                    field.clear();
                } else {
                    field.push_back(c);
                }
            }
            if (!quoted) break;
            std::string more;
            if (!std::getline(in_, more)) break;
            strip_cr(more);
            field.push_back('\n');
            line = std::move(more);
        }
        fields.push_back(std::move(field));
        return true;
    }

private:
    std::istream& in_;
};

std::string lower_ascii(std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

std::optional<std::size_t> column(const std::vector<std::string>& header, std::string_view name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        std::string h = lower_ascii(header[i]);
        if (!h.empty() && static_cast<unsigned char>(h[0]) == 0xef && h.size() >= 3) h = h.substr(3); // BOM
        h.erase(std::remove(h.begin(), h.end(), ' '), h.end());
        if (h == name) return i;
    }
    return std::nullopt;
}

std::size_t require_column(const std::vector<std::string>& header, std::string_view name,
                           const std::filesystem::path& path) {
    if (auto c = column(header, name)) return *c;
    throw Error(fmt::format("'{}' has no '{}' column", path.string(), name));
}

void read_canonical(RawDataset& raw, std::span<const std::filesystem::path> paths) {
    if (paths.size() != 2) throw Error("canonical format expects two paths: catalog and baskets");
    {
        auto in = open_input(paths[0]);
        std::string line;
        while (std::getline(in, line)) {
            strip_cr(line);
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            if (tab == std::string::npos || tab == 0) {
                ++raw.malformedRows;
                continue;
            }
            std::string id = line.substr(0, tab);
            if (raw.index.contains(id)) {
                ++raw.malformedRows;
                continue;
            }
            const auto k = raw.intern(id);
            raw.titles[static_cast<std::size_t>(k)] = line.substr(tab + 1);
        }
    }
    auto in = open_input(paths[1]);
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        strip_cr(line);
        const std::size_t source = lineNo++;
        std::vector<std::int32_t> items;
        bool ok = true;
        for (auto tok : split_whitespace(line)) {
            const auto it = raw.index.find(std::string(tok));
            if (it == raw.index.end()) {
                ok = false;
                break;
            }
            items.push_back(it->second);
        }
        if (!ok) {
            ++raw.malformedRows;
            continue;
        }
        raw.transactions.push_back(std::move(items));
        raw.sourceIds.push_back(std::to_string(source));
    }
}

void read_onlineretail(RawDataset& raw, std::span<const std::filesystem::path> paths) {
    if (paths.empty()) throw Error("onlineretail format expects a transaction CSV");
    std::unordered_map<std::string, std::size_t> invoices;
    for (const auto& path : paths) {
        auto in = open_input(path);
        CsvReader csv(in);
        std::vector<std::string> header;
        if (!csv.next(header)) throw Error(fmt::format("'{}' is empty", path.string()));
        const auto invoiceCol = require_column(header, "invoiceno", path);
        const auto stockCol = require_column(header, "stockcode", path);
        const auto descCol = require_column(header, "description", path);
        const auto quantityCol = column(header, "quantity");
        const std::size_t width = std::max({invoiceCol, stockCol, descCol, quantityCol.value_or(0)}) + 1;
        std::vector<std::string> row;
        while (csv.next(row)) {
            if (row.size() == 1 && row[0].empty()) continue;
            if (row.size() < width || row[invoiceCol].empty() || row[stockCol].empty()) {
                ++raw.malformedRows;
                continue;
            }
            const std::string& invoice = row[invoiceCol];
            // Cancellations carry a 'C' prefix and negative quantities.
            if (invoice[0] == 'C' || invoice[0] == 'c') continue;
            if (quantityCol) {
                try {
                    if (std::stod(row[*quantityCol]) <= 0) continue;
                } catch (const std::exception&) {
                    ++raw.malformedRows;
                    continue;
                }
            }
            const auto k = raw.intern(row[stockCol]);
            auto& title = raw.titles[static_cast<std::size_t>(k)];
            if (title.empty()) title = row[descCol];
            auto [it, inserted] = invoices.try_emplace(invoice, raw.transactions.size());
            if (inserted) {
                raw.transactions.emplace_back();
                raw.sourceIds.push_back(invoice);
            }
            raw.transactions[it->second].push_back(k);
        }
    }
}

void read_instacart(RawDataset& raw, std::span<const std::filesystem::path> paths) {
    std::vector<std::filesystem::path> productFiles, orderFiles;
    for (const auto& path : paths) {
        auto in = open_input(path);
        CsvReader csv(in);
        std::vector<std::string> header;
        if (!csv.next(header)) throw Error(fmt::format("'{}' is empty", path.string()));
        if (column(header, "product_name")) productFiles.push_back(path);
        else if (column(header, "order_id") && column(header, "product_id")) orderFiles.push_back(path);
        else throw Error(fmt::format("'{}' is neither products.csv nor order_products*.csv", path.string()));
    }
    if (productFiles.empty() || orderFiles.empty())
        throw Error("instacart format expects products.csv and at least one order_products*.csv");

    for (const auto& path : productFiles) {
        auto in = open_input(path);
        CsvReader csv(in);
        std::vector<std::string> header, row;
        csv.next(header);
        const auto idCol = require_column(header, "product_id", path);
        const auto nameCol = require_column(header, "product_name", path);
        while (csv.next(row)) {
            if (row.size() == 1 && row[0].empty()) continue;
            if (row.size() <= std::max(idCol, nameCol) || row[idCol].empty() || raw.index.contains(row[idCol])) {
                ++raw.malformedRows;
                continue;
            }
            const auto k = raw.intern(row[idCol]);
            raw.titles[static_cast<std::size_t>(k)] = row[nameCol];
        }
    }
    std::unordered_map<std::string, std::size_t> orders;
    for (const auto& path : orderFiles) {
        auto in = open_input(path);
        CsvReader csv(in);
        std::vector<std::string> header, row;
        csv.next(header);
        const auto orderCol = require_column(header, "order_id", path);
        const auto productCol = require_column(header, "product_id", path);
        while (csv.next(row)) {
            if (row.size() == 1 && row[0].empty()) continue;
            if (row.size() <= std::max(orderCol, productCol)) {
                ++raw.malformedRows;
                continue;
            }
            const auto product = raw.index.find(row[productCol]);
            if (product == raw.index.end()) {
                ++raw.malformedRows;
                continue;
            }
            auto [it, inserted] = orders.try_emplace(row[orderCol], raw.transactions.size());
            if (inserted) {
                raw.transactions.emplace_back();
                raw.sourceIds.push_back(row[orderCol]);
            }
            raw.transactions[it->second].push_back(product->second);
        }
    }
}

Dataset finalize(RawDataset raw) {
    Dataset dataset;
    dataset.stats.malformedRows = raw.malformedRows;
    std::vector<ProductId> dense(raw.externalIds.size(), -1);
    for (std::size_t k = 0; k < raw.externalIds.size(); ++k) {
        if (tokenize(raw.titles[k]).empty()) {
            ++dataset.stats.droppedEmptyTitleProducts;
            continue;
        }
        dense[k] = dataset.catalog.add(std::move(raw.externalIds[k]), std::move(raw.titles[k]));
    }
    for (std::size_t t = 0; t < raw.transactions.size(); ++t) {
        Basket basket;
        basket.sourceId = std::move(raw.sourceIds[t]);
        for (const auto k : raw.transactions[t]) {
            const ProductId id = dense[static_cast<std::size_t>(k)];
            if (id >= 0) basket.productIds.push_back(id);
        }
        dataset.stats.collapsedDuplicates += normalize_basket(basket);
        if (basket.size() < 2) {
            ++dataset.stats.droppedSmallBaskets;
            continue;
        }
        dataset.baskets.push_back(std::move(basket));
    }
    if (dataset.baskets.empty()) throw Error("no usable baskets after import");
    if (dataset.stats.malformedRows > 0)
        std::cerr << fmt::format("warning: skipped {} malformed rows\n", dataset.stats.malformedRows);
    return dataset;
}

} // namespace

Dataset import_dataset(DatasetFormat format, std::span<const std::filesystem::path> paths) {
    RawDataset raw;
    switch (format) {
    case DatasetFormat::canonical: read_canonical(raw, paths); break;
    case DatasetFormat::onlineretail: read_onlineretail(raw, paths); break;
    case DatasetFormat::instacart: read_instacart(raw, paths); break;
    }
    return finalize(std::move(raw));
}

void write_canonical(const Dataset& dataset, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "catalog.tsv", std::ios::binary);
        if (!out) throw Error(fmt::format("cannot write '{}'", (dir / "catalog.tsv").string()));
        for (const auto& p : dataset.catalog) {
            std::string title = p.title;
            std::replace_if(title.begin(), title.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; }, ' ');
            out << p.externalId << '\t' << title << '\n';
        }
    }
    std::ofstream out(dir / "baskets.txt", std::ios::binary);
    if (!out) throw Error(fmt::format("cannot write '{}'", (dir / "baskets.txt").string()));
    for (const auto& b : dataset.baskets) {
        for (std::size_t i = 0; i < b.size(); ++i) {
            if (i) out << ' ';
            out << dataset.catalog[b.productIds[i]].externalId;
        }
        out << '\n';
    }
}

} // namespace bastext
