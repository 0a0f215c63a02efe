#include <cstring>
#include <zlib.h>
#include <fstream>

#include <doctest.h>

#include "anat9/rng.hpp"
#include "anat9/volume.hpp"
#include "helpers.hpp"

using namespace anat9;
using namespace anat9::testing;

namespace {

// Minimal NIfTI-1 writer for building fixture files; fields not passed stay
// zero. Independent of the reader under test.
struct NiftiFixture {
    std::array<int, 3> dims{4, 4, 4};
    std::array<float, 3> pixdim{1.f, 1.f, 1.f};
    float qfac = 1.f;
    std::int16_t datatype = 4;  // int16
    std::int16_t sform_code = 0;
    std::int16_t qform_code = 0;
    std::array<float, 12> srow{};  // rows x,y,z of the affine
    std::array<float, 3> quatern{};
    std::array<float, 3> qoffset{};
    std::vector<char> payload;

    void write(const std::filesystem::path& path) const {
        std::vector<char> h(352, 0);
        auto put_i32 = [&](std::size_t off, std::int32_t v) { std::memcpy(h.data() + off, &v, 4); };
        auto put_i16 = [&](std::size_t off, std::int16_t v) { std::memcpy(h.data() + off, &v, 2); };
        auto put_f32 = [&](std::size_t off, float v) { std::memcpy(h.data() + off, &v, 4); };
        put_i32(0, 348);
        put_i16(40, 3);  // dim[0]
        for (int k = 0; k < 3; ++k) put_i16(42 + 2 * static_cast<std::size_t>(k), static_cast<std::int16_t>(dims[static_cast<std::size_t>(k)]));
        for (int k = 3; k < 7; ++k) put_i16(42 + 2 * static_cast<std::size_t>(k), 1);
        put_i16(70, datatype);
        put_i16(72, static_cast<std::int16_t>(datatype == 2 ? 8 : (datatype == 16 || datatype == 8 ? 32 : 16)));
        put_f32(76, qfac);
        for (int k = 0; k < 3; ++k) put_f32(80 + 4 * static_cast<std::size_t>(k), pixdim[static_cast<std::size_t>(k)]);
        put_f32(108, 352.f);  // vox_offset
        put_i16(252, qform_code);
        put_i16(254, sform_code);
        put_f32(256, quatern[0]);
        put_f32(260, quatern[1]);
        put_f32(264, quatern[2]);
        put_f32(268, qoffset[0]);
        put_f32(272, qoffset[1]);
        put_f32(276, qoffset[2]);
        for (int k = 0; k < 12; ++k) put_f32(280 + 4 * static_cast<std::size_t>(k), srow[static_cast<std::size_t>(k)]);
        std::memcpy(h.data() + 344, "n+1", 4);

        std::ofstream out(path, std::ios::binary);
        out.write(h.data(), static_cast<std::streamsize>(h.size()));
        out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    }
};

std::vector<char> int16_payload(std::size_t count) {
    std::vector<char> bytes(count * 2);
    for (std::size_t i = 0; i < count; ++i) {
        std::int16_t v = static_cast<std::int16_t>(i % 7);
        std::memcpy(bytes.data() + 2 * i, &v, 2);
    }
    return bytes;
}

}  // namespace

TEST_SUITE_BEGIN("volume");

TEST_CASE("container round trip is bit exact") {
    auto dir = scratch_dir("volume_roundtrip");
    VolumeMeta meta = make_meta({8, 8, 8}, Vec3(0.7, 1.25, 2.0), Vec3(-3.5, 4.0, 0.125));
    LabelVolume v = make_label_volume(meta);
    DetRng rng(7, 0, RngOp::scene_pose);
    for (auto& cell : v.voxels) cell = static_cast<std::uint16_t>(rng.uniform_int(0, 24));

    save_volume(v, dir / "vol.json");
    LabelVolume back = load_label_volume(dir / "vol.json");
    CHECK(back.meta.dims == v.meta.dims);
    CHECK((back.meta.spacing - v.meta.spacing).norm() == 0.0);
    CHECK((back.meta.origin - v.meta.origin).norm() == 0.0);
    CHECK((back.meta.direction - v.meta.direction).norm() == 0.0);
    CHECK(back.voxels == v.voxels);
}

TEST_CASE("scalar container round trip is lossless") {
    auto dir = scratch_dir("volume_scalar");
    ScalarVolume v;
    v.meta = make_meta({4, 4, 4});
    v.voxels.resize(64);
    DetRng rng(9, 0, RngOp::scene_pose);
    for (auto& x : v.voxels) x = static_cast<float>(rng.uniform(-100.0, 100.0));

    save_volume(v, dir / "s.json");
    ScalarVolume back = load_scalar_volume(dir / "s.json");
    double max_abs = 0.0;
    for (std::size_t i = 0; i < v.voxels.size(); ++i)
        max_abs = std::max(max_abs, std::abs(static_cast<double>(back.voxels[i]) - v.voxels[i]));
    CHECK(max_abs == 0.0);
}

TEST_CASE("loading preserves the label histogram") {
    auto dir = scratch_dir("volume_histogram");
    LabelVolume v = make_label_volume(make_meta({6, 5, 4}));
    DetRng rng(11, 0, RngOp::scene_pose);
    for (auto& cell : v.voxels) cell = static_cast<std::uint16_t>(rng.uniform_int(0, 3));
    std::array<int, 4> hist{};
    for (auto cell : v.voxels) ++hist[cell];

    save_volume(v, dir / "h.json");
    LabelVolume back = load_label_volume(dir / "h.json");
    std::array<int, 4> hist_back{};
    for (auto cell : back.voxels) ++hist_back[cell];
    CHECK(hist == hist_back);
}

TEST_CASE("save to unwritable location reports an I/O error") {
    LabelVolume v = make_label_volume(make_meta({2, 2, 2}));
    CHECK_THROWS_AS(save_volume(v, "/proc/anat9_forbidden/vol.json"), Error);
}

TEST_CASE("container rejects negative spacing") {
    auto dir = scratch_dir("volume_negspacing");
    std::ofstream(dir / "bad.json")
        << R"({"dims":[2,2,2],"spacing_mm":[-1,1,1],"origin_mm":[0,0,0],)"
        << R"("direction":[1,0,0,0,1,0,0,0,1],"dtype":"u8","data":"bad.raw"})";
    std::ofstream(dir / "bad.raw", std::ios::binary).write("\0\0\0\0\0\0\0\0", 8);
    CHECK_THROWS_WITH_AS(load_label_volume(dir / "bad.json"),
                         doctest::Contains("malformed header"), Error);
}

TEST_CASE("container rejects size mismatch and unknown keys") {
    auto dir = scratch_dir("volume_badsize");
    std::ofstream(dir / "bad.json")
        << R"({"dims":[2,2,2],"spacing_mm":[1,1,1],"origin_mm":[0,0,0],)"
        << R"("direction":[1,0,0,0,1,0,0,0,1],"dtype":"u8","data":"bad.raw"})";
    std::ofstream(dir / "bad.raw", std::ios::binary).write("\0\0\0", 3);
    CHECK_THROWS_WITH_AS(load_label_volume(dir / "bad.json"),
                         doctest::Contains("dims/affine inconsistency"), Error);

    std::ofstream(dir / "extra.json")
        << R"({"dims":[1,1,1],"spacing_mm":[1,1,1],"origin_mm":[0,0,0],)"
        << R"("direction":[1,0,0,0,1,0,0,0,1],"dtype":"u8","data":"x.raw","hello":1})";
    std::ofstream(dir / "x.raw", std::ios::binary).write("\0", 1);
    CHECK_THROWS_WITH_AS(load_label_volume(dir / "extra.json"), doctest::Contains("unknown key"),
                         Error);
}

TEST_CASE("4x4x4 raw+JSON file yields 64 voxels") {
    auto dir = scratch_dir("volume_tiny");
    LabelVolume v = make_label_volume(make_meta({4, 4, 4}));
    v.at(1, 2, 3) = 5;
    save_volume(v, dir / "t.json");
    LabelVolume back = load_label_volume(dir / "t.json");
    CHECK(back.voxels.size() == 64);
    CHECK(back.at(1, 2, 3) == 5);
}

TEST_CASE("voxel_to_world matches its definition") {
    VolumeMeta meta = make_meta({8, 8, 8}, Vec3(2, 2, 2));
    CHECK((voxel_to_world(meta, 1, 2, 3) - Vec3(2, 4, 6)).norm() == 0.0);
    CHECK((voxel_to_world(meta, 0, 0, 0) - meta.origin).norm() == 0.0);

    // 90 degrees about Z: x index direction maps onto world +y.
    Mat3 rz90;
    rz90 << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    VolumeMeta rotated = make_meta({8, 8, 8}, Vec3(1, 1, 1), Vec3(5, 6, 7), rz90);
    CHECK((voxel_to_world(rotated, 1, 0, 0) - (Vec3(0, 1, 0) + rotated.origin)).norm() ==
          doctest::Approx(0.0).epsilon(1e-12));

    CHECK_THROWS_AS(voxel_to_world(meta, 8, 0, 0), Error);
}

TEST_CASE("world_to_voxel inverts voxel_to_world within 1e-9") {
    Mat3 rz90;
    rz90 << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    VolumeMeta meta = make_meta({10, 12, 14}, Vec3(0.5, 1.5, 2.5), Vec3(3, -2, 9), rz90);
    DetRng rng(3, 0, RngOp::scene_pose);
    for (int t = 0; t < 200; ++t) {
        Vec3 idx(rng.uniform(0, 9), rng.uniform(0, 11), rng.uniform(0, 13));
        Vec3 back = world_to_voxel(meta, voxel_to_world(meta, idx));
        CHECK((back - idx).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("NIfTI sform header supplies direction, spacing and origin") {
    auto dir = scratch_dir("volume_nifti_sform");
    // Affine = Rz(30 deg) * diag(1.5, 2.0, 2.5), origin (10, -5.5, 2.25);
    // expected decomposition computed independently and frozen here.
    NiftiFixture fx;
    fx.sform_code = 1;
    fx.srow = {1.2990381056766580f, -1.0f, 0.0f, 10.0f,
               0.75f, 1.7320508075688774f, 0.0f, -5.5f,
               0.0f, 0.0f, 2.5f, 2.25f};
    fx.payload = int16_payload(64);
    fx.write(dir / "s.nii");

    LabelVolume v = load_label_volume(dir / "s.nii");
    CHECK(v.meta.dims == std::array<int, 3>{4, 4, 4});
    CHECK(v.meta.spacing[0] == doctest::Approx(1.5).epsilon(1e-6));
    CHECK(v.meta.spacing[1] == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(v.meta.spacing[2] == doctest::Approx(2.5).epsilon(1e-6));
    Mat3 expected;
    expected << 0.8660254037844387, -0.5, 0, 0.5, 0.8660254037844387, 0, 0, 0, 1;
    CHECK((v.meta.direction - expected).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((v.meta.origin - Vec3(10, -5.5, 2.25)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(v.voxels.size() == 64);
    CHECK(v.voxels[1] == 1);
    CHECK(v.voxels[6] == 6);
}

TEST_CASE("NIfTI sform wins over qform when both are valid") {
    auto dir = scratch_dir("volume_nifti_both");
    NiftiFixture fx;
    fx.sform_code = 1;
    fx.qform_code = 1;
    fx.srow = {1, 0, 0, 100, 0, 1, 0, 200, 0, 0, 1, 300};
    fx.quatern = {0.f, 0.f, 0.7071067811865476f};  // Rz(90), ignored
    fx.qoffset = {-1.f, -2.f, -3.f};
    fx.payload = int16_payload(64);
    fx.write(dir / "b.nii");

    LabelVolume v = load_label_volume(dir / "b.nii");
    CHECK((v.meta.origin - Vec3(100, 200, 300)).cwiseAbs().maxCoeff() < 1e-6);
    CHECK((v.meta.direction - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("NIfTI qform quaternion decodes to a rotation") {
    auto dir = scratch_dir("volume_nifti_qform");
    NiftiFixture fx;
    fx.qform_code = 1;
    fx.quatern = {0.f, 0.f, 0.7071067811865476f};  // 90 deg about Z
    fx.qoffset = {4.f, 5.f, 6.f};
    fx.pixdim = {1.25f, 1.5f, 1.75f};
    fx.payload = int16_payload(64);
    fx.write(dir / "q.nii");

    LabelVolume v = load_label_volume(dir / "q.nii");
    Mat3 expected;
    expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
    CHECK((v.meta.direction - expected).cwiseAbs().maxCoeff() < 1e-6);
    CHECK(v.meta.spacing[0] == doctest::Approx(1.25).epsilon(1e-6));
    CHECK((v.meta.origin - Vec3(4, 5, 6)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("NIfTI negative pixdim spacing is a malformed header") {
    auto dir = scratch_dir("volume_nifti_negspacing");
    NiftiFixture fx;
    fx.pixdim = {-1.f, 1.f, 1.f};
    fx.payload = int16_payload(64);
    fx.write(dir / "n.nii");
    CHECK_THROWS_WITH_AS(load_label_volume(dir / "n.nii"), doctest::Contains("malformed header"),
                         Error);
}

TEST_CASE("NIfTI negative-determinant direction is rejected") {
    auto dir = scratch_dir("volume_nifti_flip");
    NiftiFixture fx;
    fx.sform_code = 1;
    fx.srow = {-1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};  // x flipped
    fx.payload = int16_payload(64);
    fx.write(dir / "f.nii");
    CHECK_THROWS_WITH_AS(load_label_volume(dir / "f.nii"),
                         doctest::Contains("negative determinant"), Error);
}

TEST_CASE("NIfTI unsupported dtype is reported as such") {
    auto dir = scratch_dir("volume_nifti_dtype");
    NiftiFixture fx;
    fx.datatype = 64;  // float64, outside the supported set
    fx.payload.resize(64 * 8);
    fx.write(dir / "d.nii");
    CHECK_THROWS_WITH_AS(load_label_volume(dir / "d.nii"),
                         doctest::Contains("unsupported data type"), Error);
}

TEST_CASE("gzip-compressed NIfTI loads identically") {
    auto dir = scratch_dir("volume_nifti_gz");
    NiftiFixture fx;
    fx.payload = int16_payload(64);
    fx.write(dir / "p.nii");
    // Compress with zlib's gz writer; reader must produce the same volume.
    {
        std::ifstream in(dir / "p.nii", std::ios::binary);
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                                std::istreambuf_iterator<char>());
        gzFile out = gzopen((dir / "p.nii.gz").string().c_str(), "wb");
        REQUIRE(out != nullptr);
        gzwrite(out, bytes.data(), static_cast<unsigned>(bytes.size()));
        gzclose(out);
    }
    LabelVolume plain = load_label_volume(dir / "p.nii");
    LabelVolume gz = load_label_volume(dir / "p.nii.gz");
    CHECK(plain.voxels == gz.voxels);
    CHECK(plain.meta.same_grid(gz.meta));
}

TEST_SUITE_END();
