#include "dyntex/video_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cctype>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "dyntex/error.hpp"

namespace dyntex {

// ---------------------------------------------------------------------------
// VideoTensor

VideoTensor::VideoTensor(std::size_t frames, std::size_t height, std::size_t width, double fill)
    : data_({frames, height, width, kChannels}, fill) {}

VideoTensor::VideoTensor(Tensor data) : data_(std::move(data)) {
    if (data_.rank() != 4) throw ShapeError("VideoTensor", "rank", 4, data_.rank());
    if (data_.extent(3) != kChannels) throw ShapeError("VideoTensor", "channels", kChannels, data_.extent(3));
    for (double v : data_.values())
        if (!std::isfinite(v)) throw Error("VideoTensor: non-finite intensity");
}

Tensor VideoTensor::frame(std::size_t i) const {
    if (i >= frames()) throw ShapeError("VideoTensor::frame", "frame index", "out of range");
    Tensor f({height(), width(), kChannels});
    std::memcpy(f.data(), data_.data() + i * frame_size(), frame_size() * sizeof(double));
    return f;
}

void VideoTensor::set_frame(std::size_t i, const Tensor& frame) {
    if (i >= frames()) throw ShapeError("VideoTensor::set_frame", "frame index", "out of range");
    const Shape expected{height(), width(), kChannels};
    if (frame.shape() != expected)
        throw ShapeError("VideoTensor::set_frame", "frame shape", shape_string(expected) + " vs " + shape_string(frame.shape()));
    std::memcpy(data_.data() + i * frame_size(), frame.data(), frame_size() * sizeof(double));
}

std::array<double, 3> VideoTensor::channel_mean() const {
    std::array<double, 3> sum{0.0, 0.0, 0.0};
    const std::size_t pixels = data_.size() / kChannels;
    for (std::size_t p = 0; p < pixels; ++p)
        for (std::size_t c = 0; c < kChannels; ++c) sum[c] += data_[p * kChannels + c];
    for (double& s : sum) s /= static_cast<double>(pixels);
    return sum;
}

// ---------------------------------------------------------------------------
// PPM

namespace {

constexpr std::size_t kMaxImageExtent = 1u << 16;

class HeaderReader {
public:
    explicit HeaderReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    // Skips whitespace and '#' comments, then reads a decimal number.
    std::size_t number(const char* what) {
        skip_space();
        if (pos_ >= bytes_.size()) throw FormatError(std::string("PPM: truncated header before ") + what);
        if (!std::isdigit(bytes_[pos_])) throw FormatError(std::string("PPM: expected a number for ") + what);
        std::size_t v = 0;
        while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
            v = v * 10 + static_cast<std::size_t>(bytes_[pos_] - '0');
            if (v > kMaxImageExtent) throw FormatError(std::string("PPM: ") + what + " too large");
            ++pos_;
        }
        return v;
    }

    std::size_t pos() const { return pos_; }
    void advance(std::size_t n) { pos_ += n; }

private:
    void skip_space() {
        while (pos_ < bytes_.size()) {
            if (bytes_[pos_] == '#') {
                while (pos_ < bytes_.size() && bytes_[pos_] != '\n' && bytes_[pos_] != '\r') ++pos_;
            } else if (std::isspace(bytes_[pos_])) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') throw FormatError("PPM: missing P6 magic");
    HeaderReader r(bytes);
    r.advance(2);
    if (bytes.size() > 2 && !std::isspace(bytes[2]) && bytes[2] != '#')
        throw FormatError("PPM: no whitespace after magic");
    RgbImage img;
    img.width = r.number("width");
    img.height = r.number("height");
    const std::size_t maxval = r.number("maxval");
    if (img.width == 0 || img.height == 0) throw FormatError("PPM: zero image extent");
    if (maxval != 255) throw FormatError("PPM: maxval must be 255, got " + std::to_string(maxval));
    if (r.pos() >= bytes.size() || !std::isspace(bytes[r.pos()]))
        throw FormatError("PPM: missing whitespace before pixel data");
    const std::size_t start = r.pos() + 1;
    const std::size_t payload = img.width * img.height * 3;
    if (bytes.size() - start < payload)
        throw FormatError("PPM: truncated pixel data (" + std::to_string(bytes.size() - start) + " of " +
                          std::to_string(payload) + " bytes)");
    if (bytes.size() - start > payload) throw FormatError("PPM: trailing bytes after pixel data");
    img.pixels.assign(bytes.begin() + static_cast<long>(start), bytes.end());
    return img;
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
    if (image.pixels.size() != image.width * image.height * 3) throw FormatError("PPM: pixel count does not match extents");
    const std::string header =
        "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), image.pixels.begin(), image.pixels.end());
    return out;
}

std::uint8_t quantize(double value) {
    const double v = std::clamp(value, 0.0, 1.0);
    return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

std::string frame_file_name(std::size_t index) {
    std::string digits = std::to_string(index);
    if (digits.size() < 4) digits.insert(0, 4 - digits.size(), '0');
    return "frame_" + digits + ".ppm";
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path.string());
}

VideoTensor read_frames(const std::filesystem::path& directory) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(directory)) throw Error("frame directory not found: " + directory.string());
    std::map<std::size_t, fs::path> files;
    for (const auto& entry : fs::directory_iterator(directory)) {
        const std::string name = entry.path().filename().string();
        if (name.size() < 14 || name.rfind("frame_", 0) != 0 || name.substr(name.size() - 4) != ".ppm") continue;
        const std::string digits = name.substr(6, name.size() - 10);
        if (digits.size() < 4 || !std::all_of(digits.begin(), digits.end(), [](char c) { return std::isdigit(c); }))
            continue;
        files[std::stoul(digits)] = entry.path();
    }
    if (files.empty()) throw FormatError("no frame_NNNN.ppm files in " + directory.string());
    std::size_t expected = 0;
    for (const auto& [index, path] : files) {
        if (index != expected) throw FormatError("missing frame index " + std::to_string(expected) + " in " + directory.string());
        ++expected;
    }

    std::vector<RgbImage> images;
    for (const auto& [index, path] : files) {
        try {
            images.push_back(decode_ppm(read_file_bytes(path)));
        } catch (const FormatError& e) {
            throw FormatError(path.filename().string() + ": " + e.what());
        }
        if (images.back().width != images.front().width || images.back().height != images.front().height)
            throw FormatError(path.filename().string() + ": frame geometry differs from frame_0000.ppm");
    }
    VideoTensor video(images.size(), images.front().height, images.front().width);
    for (std::size_t f = 0; f < images.size(); ++f) {
        const auto& px = images[f].pixels;
        double* dst = video.tensor().data() + f * video.frame_size();
        for (std::size_t i = 0; i < px.size(); ++i) dst[i] = px[i] / 255.0;
    }
    return video;
}

void write_frames(const VideoTensor& video, const std::filesystem::path& directory) {
    std::filesystem::create_directories(directory);
    for (std::size_t f = 0; f < video.frames(); ++f) {
        RgbImage img{video.width(), video.height(), std::vector<std::uint8_t>(video.frame_size())};
        const double* src = video.tensor().data() + f * video.frame_size();
        for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = quantize(src[i]);
        write_file_bytes(directory / frame_file_name(f), encode_ppm(img));
    }
}

// ---------------------------------------------------------------------------
// DTSW

namespace {

class ByteWriter {
public:
    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) {
        for (int i = 0; i < 2; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void bytes(const std::string& s) { out_.insert(out_.end(), s.begin(), s.end()); }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::uint8_t u8(const char* what) {
        need(1, what);
        return bytes_[pos_++];
    }
    std::uint16_t u16(const char* what) {
        need(2, what);
        std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
        pos_ += 2;
        return v;
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::string text(std::size_t n, const char* what) {
        need(n, what);
        std::string s(bytes_.begin() + static_cast<long>(pos_), bytes_.begin() + static_cast<long>(pos_ + n));
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return bytes_.size() - pos_; }

private:
    void need(std::size_t n, const char* what) const {
        if (bytes_.size() - pos_ < n) throw FormatError(std::string("weight file: truncated ") + what);
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_weight_file(const WeightStore& store) {
    ByteWriter w;
    w.bytes("DTSW");
    w.u32(kWeightFileVersion);
    w.u32(static_cast<std::uint32_t>(store.size()));
    for (const auto& [name, t] : store.entries()) {
        if (name.empty() || name.size() > 0xFFFF) throw FormatError("weight file: invalid entry name length");
        if (t.rank() > 0xFF) throw FormatError("weight file: rank too large for " + name);
        w.u16(static_cast<std::uint16_t>(name.size()));
        w.bytes(name);
        w.u8(static_cast<std::uint8_t>(t.rank()));
        for (std::size_t e : t.shape()) {
            if (e > 0xFFFFFFFFu) throw FormatError("weight file: extent too large for " + name);
            w.u32(static_cast<std::uint32_t>(e));
        }
        for (double v : t.values()) w.u32(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
    return w.take();
}

WeightStore decode_weight_file(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    if (r.text(4, "magic") != "DTSW") throw FormatError("weight file: bad magic");
    const std::uint32_t version = r.u32("version");
    if (version != kWeightFileVersion) throw FormatError("weight file: unsupported version " + std::to_string(version));
    const std::uint32_t count = r.u32("entry count");
    WeightStore store(WeightProvenance::Loaded);
    for (std::uint32_t k = 0; k < count; ++k) {
        const std::uint16_t len = r.u16("name length");
        if (len == 0) throw FormatError("weight file: empty entry name");
        std::string name = r.text(len, "entry name");
        if (store.contains(name)) throw FormatError("weight file: duplicate entry '" + name + "'");
        const std::uint8_t rank = r.u8("rank");
        Shape shape(rank);
        std::size_t elements = 1;
        for (auto& e : shape) {
            e = r.u32("extent");
            if (e == 0) throw FormatError("weight file: zero extent in '" + name + "'");
            elements *= e;
            if (elements > r.remaining() / 4) throw FormatError("weight file: truncated data for '" + name + "'");
        }
        if (elements > r.remaining() / 4) throw FormatError("weight file: truncated data for '" + name + "'");
        std::vector<double> data(elements);
        for (double& v : data) v = static_cast<double>(std::bit_cast<float>(r.u32("data")));
        store.set(name, Tensor(std::move(shape), std::move(data)));
    }
    if (r.remaining() != 0) throw FormatError("weight file: trailing bytes after last entry");
    return store;
}

void write_weight_file(const WeightStore& store, const std::filesystem::path& path) {
    write_file_bytes(path, encode_weight_file(store));
}

WeightStore read_weight_file(const std::filesystem::path& path) {
    try {
        return decode_weight_file(read_file_bytes(path));
    } catch (const FormatError& e) {
        throw FormatError(path.filename().string() + ": " + e.what());
    }
}

}  // namespace dyntex
