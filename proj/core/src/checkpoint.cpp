#include "dtf/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "dtf/error.hpp"

namespace dtf {

namespace {

constexpr std::string_view kMagic{"DTFCKPT\0", 8};

}  // namespace

void ByteWriter::u32(std::uint32_t v) {
    for (int k = 0; k < 4; ++k) buf_.push_back(char((v >> (8 * k)) & 0xff));
}

void ByteWriter::u64(std::uint64_t v) {
    for (int k = 0; k < 8; ++k) buf_.push_back(char((v >> (8 * k)) & 0xff));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::bytes(std::string_view s) { buf_.append(s); }

void ByteWriter::str(std::string_view s) {
    u32(std::uint32_t(s.size()));
    bytes(s);
}

std::string_view ByteReader::bytes(std::size_t n) {
    if (n > data_.size() - pos_) throw DataError("binary stream truncated");
    std::string_view out = data_.substr(pos_, n);
    pos_ += n;
    return out;
}

std::uint32_t ByteReader::u32() {
    const std::string_view b = bytes(4);
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= std::uint32_t(static_cast<unsigned char>(b[k])) << (8 * k);
    return v;
}

std::uint64_t ByteReader::u64() {
    const std::string_view b = bytes(8);
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= std::uint64_t(static_cast<unsigned char>(b[k])) << (8 * k);
    return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
    const std::uint32_t n = u32();
    return std::string(bytes(n));
}

std::string encode_checkpoint(std::string_view architecture, const ConvNet& net) {
    ByteWriter w;
    w.bytes(kMagic);
    w.u32(kCheckpointVersion);
    w.str(architecture);
    w.u32(std::uint32_t(net.specs().size()));
    for (const ConvLayerSpec& s : net.specs()) {
        w.u32(std::uint32_t(s.in_channels));
        w.u32(std::uint32_t(s.out_channels));
        w.u32(std::uint32_t(s.kernel));
        w.u32(std::uint32_t(s.dilation));
        w.u32(s.activation == Activation::leaky_relu ? 0u : 1u);
    }
    w.u64(net.parameter_count());
    for (const LayerParams& l : net.params()) {
        // Row-major weights: [out][ky][kx][in].
        for (Eigen::Index o = 0; o < l.weights.rows(); ++o)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.f64(l.weights(o, c));
        for (Eigen::Index o = 0; o < l.bias.size(); ++o) w.f64(l.bias(o));
    }
    return w.buffer();
}

Checkpoint decode_checkpoint(std::string_view bytes) {
    ByteReader r(bytes);
    if (bytes.size() < kMagic.size() || r.bytes(kMagic.size()) != kMagic) throw DataError("not a dtf checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ck;
    ck.architecture = r.str();
    const std::uint32_t layers = r.u32();
    if (layers == 0 || layers > 1024) throw DataError("checkpoint: implausible layer count");
    std::vector<ConvLayerSpec> specs(layers);
    for (ConvLayerSpec& s : specs) {
        s.in_channels = int(r.u32());
        s.out_channels = int(r.u32());
        s.kernel = int(r.u32());
        s.dilation = int(r.u32());
        const std::uint32_t act = r.u32();
        if (act > 1) throw DataError("checkpoint: unknown activation code");
        s.activation = act == 0 ? Activation::leaky_relu : Activation::linear;
    }
    try {
        ck.net = ConvNet(std::move(specs));
    } catch (const Error& e) {
        throw DataError(std::string("checkpoint: bad architecture: ") + e.what());
    }
    const std::uint64_t count = r.u64();
    if (count != ck.net.parameter_count()) throw DataError("checkpoint: value count does not match layer shapes");
    for (LayerParams& l : ck.net.params()) {
        for (Eigen::Index o = 0; o < l.weights.rows(); ++o)
            for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(o, c) = r.f64();
        for (Eigen::Index o = 0; o < l.bias.size(); ++o) l.bias(o) = r.f64();
    }
    if (!r.at_end()) throw DataError("checkpoint: trailing bytes");
    return ck;
}

std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) throw DataError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, std::string_view architecture, const ConvNet& net) {
    write_file_bytes(path, encode_checkpoint(architecture, net));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file_bytes(path)); }

ConvNet load_checkpoint_as(const std::filesystem::path& path, std::string_view expected) {
    Checkpoint ck = load_checkpoint(path);
    if (ck.architecture != expected) {
        throw DataError("checkpoint " + path.string() + " has architecture '" + ck.architecture + "', expected '" +
                        std::string(expected) + "'");
    }
    return std::move(ck.net);
}

}  // namespace dtf
