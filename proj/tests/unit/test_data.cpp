#include "gec/data.hpp"
#include "gec/errors.hpp"
#include "gec/random.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

using namespace gec;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("gec_data_" + name)).string();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream(path) << text;
}

ObservedData small_data() {
    Mat x(4, 2);
    x << 1, 2, 3, 4, 5, 6, 7, 8;
    Vec y(4);
    y << 10, 20, 30, 40;
    return ObservedData(x, y, {true, false, true, false}, {"a", "b"});
}

}  // namespace

TEST(ObservedData, NonRespondentOutcomesAreNotStored) {
    const auto d = small_data();
    EXPECT_EQ(d.N(), 4);
    EXPECT_EQ(d.n(), 2);
    EXPECT_EQ(d.delta_y()(1), 0.0);
    EXPECT_EQ(d.delta_y()(2), 30.0);
    EXPECT_EQ(d.outcome(0), 10.0);
    EXPECT_THROW(d.outcome(1), DataError);
    EXPECT_EQ(d.responder_indices(), (std::vector<long>{0, 2}));
    EXPECT_EQ(d.column_index("b"), 1);
    EXPECT_EQ(d.column_index("z"), -1);
}

TEST(ObservedData, MissingOutcomeMayBeNonFinite) {
    Mat x = Mat::Ones(3, 1);
    Vec y(3);
    y << 1.0, std::nan(""), 2.0;
    EXPECT_NO_THROW(ObservedData(x, y, {true, false, true}));
    EXPECT_THROW(ObservedData(x, y, {true, true, true}), DataError);
    EXPECT_THROW(ObservedData(x, y, {false, false, false}), DataError);
}

TEST(Basis, ParseAndBuild) {
    const auto d = small_data();
    const auto spec = parse_basis("1,a,b,a*b,b^2-1", d.names());
    EXPECT_EQ(spec.p(), 5);
    const Mat B = build_basis(d, spec);
    EXPECT_DOUBLE_EQ(B(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(B(1, 1), 3.0);
    EXPECT_DOUBLE_EQ(B(1, 3), 12.0);
    EXPECT_DOUBLE_EQ(B(1, 4), 15.0);
    EXPECT_EQ(spec.labels(d.names()).size(), 5u);
}

TEST(Basis, InterceptPrependedAndIndexedNames) {
    const auto d = small_data();
    const auto spec = parse_basis("x2", d.names());
    EXPECT_EQ(spec.p(), 2);
    const Mat B = build_basis(d, spec);
    EXPECT_DOUBLE_EQ(B(3, 1), 8.0);
    EXPECT_THROW(parse_basis("x9", d.names()), InvalidArgument);
    EXPECT_THROW(parse_basis("a,1", d.names()), InvalidArgument);
    EXPECT_THROW(parse_basis("a,,b", d.names()), InvalidArgument);
}

TEST(QWeights, UnitAndPower) {
    Vec pi(3);
    pi << 0.25, 0.5, 1.0;
    const auto q = QWeights::power(pi, 3.0);
    EXPECT_DOUBLE_EQ(q.values(0), 0.0625);
    EXPECT_DOUBLE_EQ(q.values(2), 1.0);
    EXPECT_EQ(QWeights::unit(4).values, Vec::Ones(4));
    Vec bad = pi;
    bad(0) = 0.0;
    EXPECT_THROW(QWeights::power(bad, 0.0), InvalidArgument);
}

TEST(Csv, RoundTripIsExact) {
    Rng rng(5);
    Mat x(30, 3);
    Vec y(30);
    std::vector<bool> r(30);
    for (long i = 0; i < 30; ++i) {
        for (long j = 0; j < 3; ++j) x(i, j) = rng.normal() * 1e3;
        y(i) = rng.normal() / 7.0;
        r[i] = rng.uniform() < 0.6;
    }
    const ObservedData d(x, y, r, {"u", "v", "w"});
    const auto path = temp_path("roundtrip.csv");
    write_csv(path, d, "out");
    const auto back = load_csv(path, "out");
    std::remove(path.c_str());
    EXPECT_EQ(back.x(), d.x());
    EXPECT_EQ(back.delta(), d.delta());
    EXPECT_EQ(back.delta_y(), d.delta_y());
    EXPECT_EQ(back.names(), d.names());
}

TEST(Csv, IndicatorColumnIsAuthoritative) {
    const auto path = temp_path("indicator.csv");
    write_text(path, "x,y,r\n1,5,1\n2,6,0\n3,,0\n");
    const auto d = load_csv(path, "y", std::string("r"));
    EXPECT_EQ(d.N(), 3);
    EXPECT_EQ(d.n(), 1);
    EXPECT_EQ(d.p0(), 1);
    EXPECT_EQ(d.delta_y()(1), 0.0);
    std::remove(path.c_str());
}

TEST(Csv, MalformedInputsAreRejected) {
    const auto path = temp_path("bad.csv");
    write_text(path, "x,y\n1,2\n3\n");
    EXPECT_THROW(load_csv(path, "y"), DataError);
    write_text(path, "x,y\nabc,2\n");
    EXPECT_THROW(load_csv(path, "y"), DataError);
    write_text(path, "x,y\n1,\n2,\n");
    EXPECT_THROW(load_csv(path, "y"), DataError);
    write_text(path, "x,y\n1,2\n");
    EXPECT_THROW(load_csv(path, "outcome"), DataError);
    std::remove(path.c_str());
    EXPECT_THROW(load_csv(temp_path("missing.csv"), "y"), DataError);
}
