#include <algorithm>
#include <stdexcept>
#include <tuple>

#include "ragcrit/simkit.hpp"

namespace ragcrit {

JaccardRetriever::JaccardRetriever(int window_lines, int stride) : window_lines_(window_lines), stride_(stride) {
    if (window_lines < 1) throw std::invalid_argument("window_lines must be >= 1");
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
}

void JaccardRetriever::add_corpus(const Corpus& corpus) {
    Index index;
    const auto w = static_cast<std::size_t>(window_lines_);
    const auto step = static_cast<std::size_t>(stride_);
    for (const auto& [name, lines] : corpus.files) {
        for (std::size_t start = 0; start < lines.size(); start += step) {
            Window win;
            win.file = name;
            win.start = start;
            win.end = std::min(start + w, lines.size());
            for (std::size_t k = win.start; k < win.end; ++k) {
                win.text += lines[k];
                win.text += '\n';
            }
            for (auto& tok : lexical_tokens(win.text)) {
                const auto [it, inserted] =
                    index.vocab.try_emplace(std::move(tok), static_cast<std::uint32_t>(index.vocab.size()));
                win.tokens.push_back(it->second);
            }
            std::sort(win.tokens.begin(), win.tokens.end());
            win.tokens.erase(std::unique(win.tokens.begin(), win.tokens.end()), win.tokens.end());
            const bool last = win.end == lines.size();
            if (index.postings.size() < index.vocab.size()) index.postings.resize(index.vocab.size());
            const auto id = static_cast<std::uint32_t>(index.windows.size());
            for (auto tok : win.tokens) index.postings[tok].push_back(id);
            index.windows.push_back(std::move(win));
            if (last) break;
        }
    }
    indexes_[corpus.name] = std::move(index);
}

std::size_t JaccardRetriever::window_count(std::string_view corpus_ref) const {
    const auto it = indexes_.find(corpus_ref);
    return it == indexes_.end() ? 0 : it->second.windows.size();
}

std::vector<RetrievedSnippet> JaccardRetriever::retrieve(std::string_view query, std::string_view corpus_ref,
                                                         std::size_t k) const {
    const auto found = indexes_.find(corpus_ref);
    if (found == indexes_.end()) throw std::invalid_argument("unknown corpus: " + std::string(corpus_ref));
    const auto& index = found->second;

    // Query tokens absent from the corpus still count towards the union.
    auto raw = lexical_tokens(query);
    std::sort(raw.begin(), raw.end());
    raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
    std::vector<std::uint32_t> known;
    std::size_t unknown = 0;
    for (const auto& tok : raw) {
        const auto it = index.vocab.find(tok);
        if (it == index.vocab.end()) {
            ++unknown;
        } else {
            known.push_back(it->second);
        }
    }
    const std::size_t query_size = known.size() + unknown;

    std::vector<std::uint32_t> inter(index.windows.size(), 0);
    for (auto tok : known) {
        for (auto w : index.postings[tok]) ++inter[w];
    }

    struct Scored {
        double sim;
        const Window* win;
    };
    std::vector<Scored> scored;
    scored.reserve(index.windows.size());
    for (std::size_t w = 0; w < index.windows.size(); ++w) {
        const auto& win = index.windows[w];
        const std::size_t uni = query_size + win.tokens.size() - inter[w];
        scored.push_back({uni == 0 ? 0.0 : static_cast<double>(inter[w]) / static_cast<double>(uni), &win});
    }
    const auto take = std::min(k, scored.size());
    auto better = [](const Scored& a, const Scored& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        return std::tie(a.win->file, a.win->start) < std::tie(b.win->file, b.win->start);
    };
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take), scored.end(), better);

    std::vector<RetrievedSnippet> out;
    out.reserve(take);
    for (std::size_t i = 0; i < take; ++i) {
        const auto& w = *scored[i].win;
        out.push_back({w.file + ":" + std::to_string(w.start + 1) + "-" + std::to_string(w.end), w.text, scored[i].sim});
    }
    return out;
}

}  // namespace ragcrit
