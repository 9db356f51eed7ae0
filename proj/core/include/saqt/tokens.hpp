// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace saqt {

// Token id 0 marks the beginning of every stream; generated ids are drawn
// from [1, vocab) so position 0 is the only occurrence.
std::vector<int> generate_stream(std::uint64_t seed, int length, int vocab);

// Raw bytes of a text file, one token per byte, with the id-0 opener
// prepended. DataError if the file is missing/empty or a byte >= vocab.
std::vector<int> byte_tokenize_file(const std::string& path, int vocab);

std::string stream_id_for_seed(std::uint64_t seed, int length);
std::string stream_id_for_file(const std::string& path);

}  // namespace saqt
