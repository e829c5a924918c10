// Joint vocabulary shared by both languages, with fixed reserved ids.
#pragma once

#include <algorithm>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace unmt {

class Vocab {
public:
    static constexpr int pad_id = 0;
    static constexpr int bos_id = 1;
    static constexpr int eos_id = 2;
    static constexpr int unk_id = 3;
    static constexpr int reserved = 4;

    Vocab() {
        for (const char* t : {"<pad>", "<bos>", "<eos>", "<unk>"}) add_token(t);
    }

    explicit Vocab(const std::vector<std::string>& tokens) : Vocab() {
        for (const auto& t : tokens) add_token(t);
    }

    int add_token(const std::string& tok) {
        auto it = index_.find(tok);
        if (it != index_.end()) return it->second;
        const int id = static_cast<int>(tokens_.size());
        index_[tok] = id;
        tokens_.push_back(tok);
        return id;
    }

    int id(const std::string& tok) const {
        auto it = index_.find(tok);
        return it == index_.end() ? unk_id : it->second;
    }

    const std::string& token(int id) const {
        if (id < 0 || static_cast<size_t>(id) >= tokens_.size())
            throw std::out_of_range("vocab: id out of range");
        return tokens_[static_cast<size_t>(id)];
    }

    size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }

private:
    std::vector<std::string> tokens_;
    std::unordered_map<std::string, int> index_;
};

}  // namespace unmt
