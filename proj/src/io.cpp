#include "embsteer/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "embsteer/errors.hpp"

namespace embsteer {

namespace {

using Bytes = std::vector<unsigned char>;

void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<unsigned char>(v & 0xFF));
    out.push_back(static_cast<unsigned char>(v >> 8));
}

void put_u32(Bytes& out, std::uint32_t v) {
    for (int shift = 0; shift < 32; shift += 8)
        out.push_back(static_cast<unsigned char>((v >> shift) & 0xFF));
}

void put_f32(Bytes& out, float v) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    put_u32(out, bits);
}

// Read cursor with truncation checks.
struct Reader {
    const Bytes& bytes;
    std::size_t pos = 0;

    std::size_t remaining() const noexcept { return bytes.size() - pos; }

    void need(std::size_t n, const char* what) const {
        if (remaining() < n) {
            std::ostringstream msg;
            msg << "truncated file: need " << n << " bytes for " << what << ", have "
                << remaining();
            throw FormatError(FormatCode::truncated, msg.str());
        }
    }

    std::uint8_t get_u8(const char* what) {
        need(1, what);
        return bytes[pos++];
    }

    std::uint16_t get_u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(bytes[pos]) |
                          static_cast<std::uint16_t>(bytes[pos + 1]) << 8;
        pos += 2;
        return v;
    }

    std::uint32_t get_u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }

    float get_f32() {
        need(4, "payload value");
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return std::bit_cast<float>(bits);
    }
};

Bytes read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    in.seekg(0, std::ios::end);
    const auto size = in.tellg();
    if (size < 0) throw IoError("cannot stat " + path.string());
    in.seekg(0, std::ios::beg);
    Bytes bytes(static_cast<std::size_t>(size));
    if (size > 0) in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw IoError("cannot read " + path.string());
    return bytes;
}

void write_file(const std::filesystem::path& path, const Bytes& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write " + path.string());
}

// Element count with overflow rejection: tensors * d * l must fit both the
// element and the byte count in 64 bits.
std::uint64_t checked_elements(std::uint64_t tensors, std::uint64_t d, std::uint64_t l) {
    constexpr std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() / 4;
    if (d != 0 && tensors > limit / d)
        throw FormatError(FormatCode::bad_header, "header dimensions overflow");
    const std::uint64_t rows = tensors * d;
    if (l != 0 && rows > limit / l)
        throw FormatError(FormatCode::bad_header, "header dimensions overflow");
    return rows * l;
}

void append_matrix(Bytes& out, const Matrix& m) {
    for (double v : m.data()) put_f32(out, static_cast<float>(v));
}

void append_vector(Bytes& out, std::span<const double> v) {
    for (double x : v) put_f32(out, static_cast<float>(x));
}

Matrix take_matrix(Reader& reader, std::size_t rows, std::size_t cols) {
    std::vector<double> data(rows * cols);
    for (double& v : data) v = static_cast<double>(reader.get_f32());
    return Matrix(rows, cols, std::move(data));
}

std::vector<double> take_vector(Reader& reader, std::size_t n) {
    std::vector<double> data(n);
    for (double& v : data) v = static_cast<double>(reader.get_f32());
    return data;
}

std::string meta_string(const nlohmann::json& meta) { return meta.dump(); }

struct Header {
    std::string magic;
    std::uint16_t version;
    std::uint32_t n, d, l;
    std::uint8_t dtype;
    std::uint8_t mode = 0;  // ABCM
    std::uint32_t r = 0;    // ABCM
    nlohmann::json meta;
};

Header parse_header(Reader& reader, const char* expected_magic) {
    Header h;
    reader.need(4, "magic");
    h.magic.assign(reinterpret_cast<const char*>(reader.bytes.data()) + reader.pos, 4);
    reader.pos += 4;
    if (expected_magic && h.magic != expected_magic) {
        throw FormatError(FormatCode::bad_magic,
                          "bad magic '" + h.magic + "', expected '" + expected_magic + "'");
    }
    h.version = reader.get_u16("version");
    if (h.version != kFormatVersion) {
        std::ostringstream msg;
        msg << "unsupported version " << h.version;
        throw FormatError(FormatCode::bad_version, msg.str());
    }
    h.n = reader.get_u32("n");
    h.d = reader.get_u32("d");
    h.l = reader.get_u32("l");
    h.dtype = reader.get_u8("dtype");
    if (h.dtype != 0)
        throw FormatError(FormatCode::unsupported_dtype,
                          "unsupported dtype " + std::to_string(h.dtype));
    if (h.magic == "ABCM") {
        h.mode = reader.get_u8("mode");
        h.r = reader.get_u32("r");
    }
    const std::uint32_t meta_len = reader.get_u32("meta length");
    reader.need(meta_len, "meta");
    const char* meta_begin = reinterpret_cast<const char*>(reader.bytes.data()) + reader.pos;
    reader.pos += meta_len;
    try {
        h.meta = meta_len == 0 ? nlohmann::json::object()
                               : nlohmann::json::parse(meta_begin, meta_begin + meta_len);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(FormatCode::bad_meta, std::string("meta is not valid JSON: ") + e.what());
    }
    if (h.d == 0 || h.l == 0)
        throw FormatError(FormatCode::dim_mismatch, "header dimensions must be positive");
    return h;
}

void check_payload_size(const Reader& reader, std::uint64_t expected_elements) {
    // Compare in elements to keep the byte count from overflowing.
    if (reader.remaining() % 4 != 0 || reader.remaining() / 4 != expected_elements) {
        std::ostringstream msg;
        msg << "payload is " << reader.remaining() << " bytes, header implies "
            << expected_elements << " f32 values";
        throw FormatError(FormatCode::truncated, msg.str());
    }
}

void verify_digest(const Reader& reader, const nlohmann::json& meta) {
    if (!meta.contains("digest")) return;
    const std::uint64_t actual =
        fnv1a64(reader.bytes.data() + reader.pos, reader.remaining());
    const std::string expected = meta["digest"].get<std::string>();
    if (digest_hex(actual) != expected) {
        throw FormatError(FormatCode::digest_mismatch,
                          "payload digest " + digest_hex(actual) + " != stored " + expected);
    }
}

void check_finite(const Matrix& m, const char* what) {
    if (!m.all_finite())
        throw FormatError(FormatCode::non_finite, std::string("non-finite value in ") + what);
}

Bytes assemble(const char* magic, std::uint32_t n, std::uint32_t d, std::uint32_t l,
               nlohmann::json meta, const Bytes& payload,
               std::optional<std::pair<std::uint8_t, std::uint32_t>> mode_r = std::nullopt) {
    meta["digest"] = digest_hex(fnv1a64(payload.data(), payload.size()));
    const std::string meta_str = meta_string(meta);

    Bytes out;
    out.reserve(32 + meta_str.size() + payload.size());
    out.insert(out.end(), magic, magic + 4);
    put_u16(out, kFormatVersion);
    put_u32(out, n);
    put_u32(out, d);
    put_u32(out, l);
    out.push_back(0);  // dtype f32
    if (mode_r) {
        out.push_back(mode_r->first);
        put_u32(out, mode_r->second);
    }
    put_u32(out, static_cast<std::uint32_t>(meta_str.size()));
    out.insert(out.end(), meta_str.begin(), meta_str.end());
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Bytes dataset_payload(const PairDataset& ds) {
    Bytes payload;
    payload.reserve(ds.size() * 2 * ds.d * ds.l * 4);
    for (const auto& pair : ds.pairs) {
        append_matrix(payload, pair.neutral);
        append_matrix(payload, pair.biased);
    }
    return payload;
}

Bytes checkpoint_payload(const AdaptiveModule& module) {
    Bytes payload;
    for_each_tensor(module, [&](std::span<const double> tensor) {
        append_vector(payload, tensor);
    });
    return payload;
}

std::size_t checkpoint_tensor_count(const AdaptiveModule& module) noexcept {
    return (module.token ? 4u : 0u) + (module.embedding ? 4u : 0u);
}

}  // namespace

std::uint64_t fnv1a64(const unsigned char* data, std::size_t size) noexcept {
    std::uint64_t hash = 0xCBF29CE484222325ULL;
    for (std::size_t i = 0; i < size; ++i) {
        hash ^= data[i];
        hash *= 0x00000100000001B3ULL;
    }
    return hash;
}

std::string digest_hex(std::uint64_t digest) {
    static const char* hex = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = hex[digest & 0xF];
        digest >>= 4;
    }
    return out;
}

void write_dataset(const std::filesystem::path& path, const PairDataset& ds) {
    ds.validate();
    const Bytes payload = dataset_payload(ds);
    write_file(path, assemble("EBPD", static_cast<std::uint32_t>(ds.size()),
                              static_cast<std::uint32_t>(ds.d), static_cast<std::uint32_t>(ds.l),
                              ds.meta, payload));
}

PairDataset read_dataset(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    Reader reader{bytes};
    const Header h = parse_header(reader, "EBPD");
    if (h.n == 0) throw FormatError(FormatCode::dim_mismatch, "dataset needs at least one pair");
    check_payload_size(reader, checked_elements(2ull * h.n, h.d, h.l));
    verify_digest(reader, h.meta);

    PairDataset ds;
    ds.d = h.d;
    ds.l = h.l;
    ds.meta = h.meta;
    ds.pairs.reserve(h.n);
    for (std::uint32_t i = 0; i < h.n; ++i) {
        EmbeddingPair pair;
        pair.neutral = take_matrix(reader, h.d, h.l);
        pair.biased = take_matrix(reader, h.d, h.l);
        check_finite(pair.neutral, "dataset pair");
        check_finite(pair.biased, "dataset pair");
        ds.pairs.push_back(std::move(pair));
    }
    return ds;
}

void write_direction(const std::filesystem::path& path, const Matrix& direction,
                     std::uint32_t source_pairs, nlohmann::json meta) {
    require_nonempty(direction, "write_direction");
    Bytes payload;
    append_matrix(payload, direction);
    write_file(path, assemble("BDIR", source_pairs, static_cast<std::uint32_t>(direction.rows()),
                              static_cast<std::uint32_t>(direction.cols()), std::move(meta),
                              payload));
}

DirectionFile read_direction(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    Reader reader{bytes};
    const Header h = parse_header(reader, "BDIR");
    check_payload_size(reader, checked_elements(1, h.d, h.l));
    verify_digest(reader, h.meta);

    DirectionFile file;
    file.direction = take_matrix(reader, h.d, h.l);
    check_finite(file.direction, "direction");
    file.source_pairs = h.n;
    file.meta = h.meta;
    return file;
}

void EmbeddingBatch::validate() const {
    if (d == 0 || l == 0) throw DimensionError("batch dimensions must be positive");
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        if (embeddings[i].rows() != d || embeddings[i].cols() != l) {
            std::ostringstream msg;
            msg << "batch embedding " << i << " is " << shape_string(embeddings[i])
                << ", batch is " << d << "x" << l;
            throw DimensionError(msg.str());
        }
        if (!embeddings[i].all_finite()) {
            std::ostringstream msg;
            msg << "batch embedding " << i << " contains non-finite values";
            throw DimensionError(msg.str());
        }
    }
}

void write_batch(const std::filesystem::path& path, const EmbeddingBatch& batch) {
    batch.validate();
    Bytes payload;
    payload.reserve(batch.size() * batch.d * batch.l * 4);
    for (const auto& m : batch.embeddings) append_matrix(payload, m);
    write_file(path, assemble("EBIN", static_cast<std::uint32_t>(batch.size()),
                              static_cast<std::uint32_t>(batch.d),
                              static_cast<std::uint32_t>(batch.l), batch.meta, payload));
}

EmbeddingBatch read_batch(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    Reader reader{bytes};
    const Header h = parse_header(reader, "EBIN");
    check_payload_size(reader, checked_elements(h.n, h.d, h.l));
    verify_digest(reader, h.meta);

    EmbeddingBatch batch;
    batch.d = h.d;
    batch.l = h.l;
    batch.meta = h.meta;
    batch.embeddings.reserve(h.n);
    for (std::uint32_t i = 0; i < h.n; ++i) {
        batch.embeddings.push_back(take_matrix(reader, h.d, h.l));
        check_finite(batch.embeddings.back(), "batch embedding");
    }
    return batch;
}

void write_checkpoint(const std::filesystem::path& path, const AdaptiveModule& module,
                      nlohmann::json meta) {
    module.validate();
    const Bytes payload = checkpoint_payload(module);
    meta["mode"] = to_string(module.mode);
    meta["r"] = module.r;
    meta["parameter_count"] = module.parameter_count();
    write_file(path,
               assemble("ABCM", static_cast<std::uint32_t>(checkpoint_tensor_count(module)),
                        static_cast<std::uint32_t>(module.d), static_cast<std::uint32_t>(module.l),
                        std::move(meta), payload,
                        std::make_pair(static_cast<std::uint8_t>(module.mode),
                                       static_cast<std::uint32_t>(module.r))));
}

CheckpointFile read_checkpoint(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    Reader reader{bytes};
    const Header h = parse_header(reader, "ABCM");
    if (h.mode > 2)
        throw FormatError(FormatCode::bad_header, "unknown mode " + std::to_string(h.mode));
    if (h.r < 1 || h.r > std::min(h.d, h.l))
        throw FormatError(FormatCode::bad_header,
                          "reduction ratio " + std::to_string(h.r) + " out of range");

    AdaptiveModule module;
    module.mode = static_cast<AdaptMode>(h.mode);
    module.d = h.d;
    module.l = h.l;
    module.r = h.r;

    const bool has_token = module.mode != AdaptMode::embedding;
    const bool has_embedding = module.mode != AdaptMode::token;
    const std::uint32_t expected_tensors = (has_token ? 4u : 0u) + (has_embedding ? 4u : 0u);
    if (h.n != expected_tensors)
        throw FormatError(FormatCode::bad_header,
                          "tensor count " + std::to_string(h.n) + " does not match mode");

    const std::uint64_t th = module.token_hidden();
    const std::uint64_t eh = module.embedding_hidden();
    std::uint64_t elements = 0;
    if (has_token) elements += checked_elements(1, th, h.l) * 2 + th + h.l;
    if (has_embedding) elements += checked_elements(1, eh, h.d) * 2 + eh + h.d;
    check_payload_size(reader, elements);
    verify_digest(reader, h.meta);

    auto take_branch = [&](std::size_t len, std::size_t hidden) {
        AttentionBranch branch;
        branch.squeeze.weight = take_matrix(reader, hidden, len);
        branch.squeeze.bias = take_vector(reader, hidden);
        branch.excite.weight = take_matrix(reader, len, hidden);
        branch.excite.bias = take_vector(reader, len);
        check_finite(branch.squeeze.weight, "checkpoint tensor");
        check_finite(branch.excite.weight, "checkpoint tensor");
        for (double v : branch.squeeze.bias)
            if (!std::isfinite(v))
                throw FormatError(FormatCode::non_finite, "non-finite value in checkpoint tensor");
        for (double v : branch.excite.bias)
            if (!std::isfinite(v))
                throw FormatError(FormatCode::non_finite, "non-finite value in checkpoint tensor");
        return branch;
    };
    if (has_token) module.token = take_branch(h.l, static_cast<std::size_t>(th));
    if (has_embedding) module.embedding = take_branch(h.d, static_cast<std::size_t>(eh));

    module.validate();
    return CheckpointFile{std::move(module), h.meta};
}

nlohmann::json FileInfo::to_json() const {
    nlohmann::json j{{"magic", magic},   {"version", version}, {"n", n},
                     {"d", d},           {"l", l},             {"dtype", dtype},
                     {"payload_bytes", payload_bytes},         {"meta", meta}};
    if (mode) j["mode"] = *mode;
    if (r) j["r"] = *r;
    return j;
}

FileInfo inspect_file(const std::filesystem::path& path) {
    const Bytes bytes = read_file(path);
    Reader reader{bytes};
    if (bytes.size() < 4) throw FormatError(FormatCode::truncated, "file shorter than magic");
    const std::string magic(reinterpret_cast<const char*>(bytes.data()), 4);
    if (magic != "EBPD" && magic != "BDIR" && magic != "ABCM" && magic != "EBIN")
        throw FormatError(FormatCode::bad_magic, "bad magic '" + magic + "'");
    const Header h = parse_header(reader, nullptr);

    FileInfo info;
    info.magic = h.magic;
    info.version = h.version;
    info.n = h.n;
    info.d = h.d;
    info.l = h.l;
    info.dtype = h.dtype;
    if (h.magic == "ABCM") {
        info.mode = h.mode;
        info.r = h.r;
    }
    info.payload_bytes = reader.remaining();
    info.meta = h.meta;
    return info;
}

std::uint64_t payload_digest(const PairDataset& ds) {
    const Bytes payload = dataset_payload(ds);
    return fnv1a64(payload.data(), payload.size());
}

std::uint64_t payload_digest(const Matrix& direction) {
    Bytes payload;
    append_matrix(payload, direction);
    return fnv1a64(payload.data(), payload.size());
}

std::uint64_t payload_digest(const AdaptiveModule& module) {
    const Bytes payload = checkpoint_payload(module);
    return fnv1a64(payload.data(), payload.size());
}

}  // namespace embsteer
