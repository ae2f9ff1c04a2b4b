#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dtf/net.hpp"

namespace dtf {

/// Checkpoint container layout (all integers and reals little-endian):
///
///   magic "DTFCKPT\0" | u32 format version | u32 tag length | tag bytes
///   u32 layer count | per layer: u32 in, out, kernel, dilation, activation
///   u64 value count | per layer: weights [out][ky][kx][in] then bias, as f64
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string architecture;
    ConvNet net;
};

std::string encode_checkpoint(std::string_view architecture, const ConvNet& net);
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, std::string_view architecture, const ConvNet& net);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads a checkpoint and rejects it unless its architecture tag matches.
ConvNet load_checkpoint_as(const std::filesystem::path& path, std::string_view expected_architecture);

/// Little-endian byte stream helpers shared by the binary file formats.
class ByteWriter {
public:
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void bytes(std::string_view s);
    void str(std::string_view s);  ///< u32 length + bytes
    const std::string& buffer() const { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}
    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    std::string_view bytes(std::size_t n);
    std::string str();
    bool at_end() const { return pos_ == data_.size(); }

private:
    std::string_view data_;
    std::size_t pos_ = 0;
};

std::string read_file_bytes(const std::filesystem::path& path);
/// Writes to a temporary sibling and renames it into place.
void write_file_bytes(const std::filesystem::path& path, std::string_view bytes);

}  // namespace dtf
