#include "cqrank/neural/checkpoint.hpp"

#include <fstream>

#include "cqrank/binary_io.hpp"

namespace cqrank::nn {

namespace {

template <typename Writer>
void write_stack(Writer& w, const LayerStack<double>& stack) {
    for (const auto& layer : stack) {
        for (Eigen::Index r = 0; r < layer.weights.rows(); ++r)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) w.template scalar<double>(layer.weights(r, c));
        w.bytes(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()) * sizeof(double));
    }
}

void read_stack(::cqrank::detail::ChecksummedReader& r, LayerStack<double>& stack) {
    for (auto& layer : stack) {
        for (Eigen::Index row = 0; row < layer.weights.rows(); ++row)
            for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(row, c) = r.scalar<double>();
        r.bytes(layer.bias.data(), static_cast<std::size_t>(layer.bias.size()) * sizeof(double));
    }
}

}  // namespace

std::string save_checkpoint(const Checkpoint& cp, const std::filesystem::path& path) {
    const auto& shape = cp.model.shape();
    auto widths = shape.widths();
    if (cp.optimizer.m.size() != cp.model.layers().size() || cp.optimizer.v.size() != cp.model.layers().size())
        throw NumericError("checkpoint: optimizer state does not match model depth");

    // Write to a sibling temp file first so a crash never leaves a
    // half-written checkpoint under the final name.
    auto tmp = path;
    tmp += ".tmp";
    std::uint64_t sum;
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ValidationError("cannot write " + tmp.string());
        ::cqrank::detail::ChecksummedWriter w(out);
        w.bytes(kCheckpointMagic, sizeof(kCheckpointMagic));
        w.scalar<std::uint16_t>(kCheckpointVersion);
        w.scalar<std::uint32_t>(static_cast<std::uint32_t>(shape.layer_count()));
        for (auto width : widths) w.scalar<std::uint32_t>(static_cast<std::uint32_t>(width));
        w.scalar<double>(cp.model.dropout_rate());
        write_stack(w, cp.model.layers());
        w.scalar<std::uint64_t>(cp.optimizer.t);
        w.scalar<double>(cp.optimizer.learning_rate);
        w.scalar<double>(cp.optimizer.beta1);
        w.scalar<double>(cp.optimizer.beta2);
        w.scalar<double>(cp.optimizer.epsilon);
        write_stack(w, cp.optimizer.m);
        write_stack(w, cp.optimizer.v);
        w.scalar<std::uint64_t>(cp.epochs_completed);
        sum = w.finish();
        out.close();
        if (!out) throw ValidationError("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
    return to_hex(sum);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open checkpoint " + path.string());
    ::cqrank::detail::ChecksummedReader r(in, path.string());
    char magic[6];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw FormatError(path.string() + ": not a model checkpoint (bad magic)");
    auto version = r.scalar<std::uint16_t>();
    if (version != kCheckpointVersion)
        throw FormatError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
    auto layer_count = r.scalar<std::uint32_t>();
    if (layer_count == 0 || layer_count > 64) throw FormatError(path.string() + ": implausible layer count");
    MlpShape shape;
    shape.hidden_dims.clear();
    std::uint64_t params = 0;
    std::uint32_t prev = 0;
    for (std::uint32_t i = 0; i <= layer_count; ++i) {
        auto width = r.scalar<std::uint32_t>();
        if (width == 0) throw FormatError(path.string() + ": zero layer width");
        if (i == 0) shape.input_dim = width;
        else if (i == layer_count) shape.output_dim = width;
        else shape.hidden_dims.push_back(width);
        if (i > 0) params += std::uint64_t(prev) * width + width;
        prev = width;
    }
    // Model, two moment stacks, and the fixed fields must fit in the file.
    if (params * 3 * sizeof(double) > std::filesystem::file_size(path))
        throw FormatError(path.string() + ": truncated: widths need more bytes than the file holds");
    double dropout = r.scalar<double>();
    if (!(dropout >= 0.0 && dropout < 1.0)) throw FormatError(path.string() + ": invalid dropout rate");

    Checkpoint cp;
    cp.model = Mlp(shape, dropout);
    read_stack(r, cp.model.layers());
    cp.optimizer = Adam::fresh(shape, 0.0);
    cp.optimizer.t = r.scalar<std::uint64_t>();
    cp.optimizer.learning_rate = r.scalar<double>();
    cp.optimizer.beta1 = r.scalar<double>();
    cp.optimizer.beta2 = r.scalar<double>();
    cp.optimizer.epsilon = r.scalar<double>();
    read_stack(r, cp.optimizer.m);
    read_stack(r, cp.optimizer.v);
    cp.epochs_completed = r.scalar<std::uint64_t>();
    r.verify_trailer();
    return cp;
}

}  // namespace cqrank::nn
