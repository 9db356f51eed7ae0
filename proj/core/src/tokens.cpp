// SPDX-License-Identifier: Apache-2.0
#include "saqt/tokens.hpp"

#include <filesystem>
#include <stdexcept>

#include "saqt/errors.hpp"
#include "saqt/io_detail.hpp"
#include "saqt/rng.hpp"

namespace saqt {

std::vector<int> generate_stream(std::uint64_t seed, int length, int vocab) {
    if (length < 1)
        throw std::invalid_argument("generate_stream: length must be positive");
    if (vocab < 2)
        throw std::invalid_argument("generate_stream: vocab must be at least 2");
    Rng rng(seed);
    std::vector<int> tokens(static_cast<std::size_t>(length));
    tokens[0] = 0;
    for (int i = 1; i < length; ++i)
        tokens[i] = 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(vocab - 1)));
    return tokens;
}

std::vector<int> byte_tokenize_file(const std::string& path, int vocab) {
    if (vocab < 2)
        throw std::invalid_argument("byte_tokenize_file: vocab must be at least 2");
    const std::string bytes = io_detail::read_file(path, "token file");
    if (bytes.empty())
        throw DataError("token file '" + path + "' is empty");
    std::vector<int> tokens;
    tokens.reserve(bytes.size() + 1);
    tokens.push_back(0);
    for (unsigned char b : bytes) {
        if (b >= vocab)
            throw DataError("token file '" + path + "': byte value " + std::to_string(b) +
                            " outside vocab " + std::to_string(vocab));
        tokens.push_back(b);
    }
    return tokens;
}

std::string stream_id_for_seed(std::uint64_t seed, int length) {
    return "seed:" + std::to_string(seed) + ":len:" + std::to_string(length);
}

std::string stream_id_for_file(const std::string& path) {
    return "file:" + std::filesystem::path(path).filename().string();
}

}  // namespace saqt
