#include "odfm/datamodel.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace odfm;

namespace {

MultiSeries parse(const std::string& text, CsvOptions opt = {}) {
  std::istringstream in(text);
  return parse_csv(in, opt);
}

Matrix panel(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST(MultiSeries, RejectsBadShapesAndValues) {
  EXPECT_THROW(MultiSeries(Matrix(0, 3)), ArgumentError);
  EXPECT_THROW(MultiSeries(Matrix::Zero(2, 1)), ArgumentError);
  Matrix m = Matrix::Zero(2, 3);
  m(1, 1) = std::nan("");
  EXPECT_THROW(MultiSeries{m}, ArgumentError);
  EXPECT_THROW(MultiSeries(Matrix::Zero(2, 3), {"a"}), ArgumentError);
}

TEST(MultiSeries, GeneratesLabels) {
  const MultiSeries s(Matrix::Zero(3, 4));
  EXPECT_EQ(s.labels(), (std::vector<std::string>{"y1", "y2", "y3"}));
}

TEST(Csv, RowsAreComponents) {
  CsvOptions opt;
  opt.orientation = Orientation::RowsAreComponents;
  const MultiSeries s = parse("1,2,3,4,5\n6,7,8,9,10\n11,12,13,14,15\n", opt);
  EXPECT_EQ(s.n(), 3);
  EXPECT_EQ(s.t(), 5);
  EXPECT_EQ(s.values()(1, 2), 8.0);
}

TEST(Csv, HeaderLabelsColumnsAreComponents) {
  CsvOptions opt;
  opt.header = true;
  const MultiSeries s = parse("cpi,ip,rbndl\n1,2,3\n4,5,6e-1\n", opt);
  EXPECT_EQ(s.n(), 3);
  EXPECT_EQ(s.t(), 2);
  EXPECT_EQ(s.labels(), (std::vector<std::string>{"cpi", "ip", "rbndl"}));
  EXPECT_DOUBLE_EQ(s.values()(2, 1), 0.6);
}

TEST(Csv, BlankCellNamesCoordinates) {
  try {
    parse("1,2,3\n4,,6\n");
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.row(), 2u);
    EXPECT_EQ(e.col(), 2u);
    EXPECT_NE(std::string(e.what()).find("row 2, column 2"), std::string::npos);
  }
}

TEST(Csv, NonNumericAndRagged) {
  EXPECT_THROW(parse("1,2\n3,abc\n"), ParseError);
  EXPECT_THROW(parse("1,2\n3\n"), ParseError);
}

TEST(Csv, WriteThenReparseIsIdentical) {
  Matrix v(3, 7);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = std::sin(1.0 + static_cast<double>(i)) * 1e3 / 7.0;
  v(0, 0) = 1e-300;
  v(1, 1) = -2.5e17;
  const MultiSeries s(v, {"a", "b", "c"});
  for (auto orient : {Orientation::ColumnsAreComponents, Orientation::RowsAreComponents}) {
    CsvOptions opt;
    opt.header = orient == Orientation::ColumnsAreComponents;
    opt.orientation = orient;
    opt.label_column = orient == Orientation::RowsAreComponents;
    opt.delimiter = ';';
    std::ostringstream out;
    write_csv(out, s, opt);
    EXPECT_EQ(parse(out.str(), opt), s);
  }
}

TEST(Transform, DiffOfConstantIsZero) {
  const MultiSeries s(Matrix::Constant(2, 6, 3.5));
  const MultiSeries d = apply_transform(s, {TransformKind::Diff, TransformKind::Diff});
  EXPECT_EQ(d.t(), 5);
  EXPECT_TRUE(d.values().isZero(0.0));
}

TEST(Transform, LogDiffOfGeometricIsLogRatio) {
  Matrix v(1, 8);
  for (int t = 0; t < 8; ++t) v(0, t) = 2.0 * std::pow(1.3, t + 1);
  const MultiSeries d = apply_transform(MultiSeries(v), {TransformKind::LogDiff});
  EXPECT_EQ(d.t(), 7);
  for (int t = 0; t < 7; ++t) EXPECT_NEAR(d.values()(0, t), std::log(1.3), 1e-14);
}

TEST(Transform, DoubleLogDiffOfPowersOfTwo) {
  const MultiSeries d = apply_transform(MultiSeries(panel({{1, 2, 4, 8}})), {TransformKind::DoubleLogDiff});
  ASSERT_EQ(d.t(), 2);
  EXPECT_NEAR(d.values()(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(d.values()(0, 1), 0.0, 1e-15);
}

TEST(Transform, MixedOrdersTruncateFromTheFront) {
  const MultiSeries s(panel({{1, 2, 4, 8, 16}, {1, 3, 6, 10, 15}, {5, 5, 5, 5, 5}}));
  const MultiSeries d =
      apply_transform(s, {TransformKind::DoubleLogDiff, TransformKind::Diff, TransformKind::None});
  ASSERT_EQ(d.t(), 3);
  // All components end at the last original date.
  EXPECT_DOUBLE_EQ(d.values()(1, 2), 5.0);
  EXPECT_DOUBLE_EQ(d.values()(1, 0), 3.0);
  EXPECT_DOUBLE_EQ(d.values()(2, 2), 5.0);
}

TEST(Transform, LogOfNonPositiveNamesComponentAndTime) {
  const MultiSeries s(panel({{1, 2, 3}, {1, -2, 3}}), {"gdp", "spread"});
  try {
    apply_transform(s, {TransformKind::LogDiff, TransformKind::LogDiff});
    FAIL() << "expected a domain error";
  } catch (const DomainError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("spread"), std::string::npos);
    EXPECT_NE(msg.find("2"), std::string::npos);
  }
}

TEST(Transform, SpecLengthMustMatch) {
  EXPECT_THROW(apply_transform(MultiSeries(Matrix::Ones(2, 4)), {TransformKind::Diff}), ArgumentError);
}

TEST(Transform, ParseNamesAndBroadcast) {
  EXPECT_EQ(parse_transform("log-diff"), TransformKind::LogDiff);
  EXPECT_EQ(parse_transform("d2log"), TransformKind::DoubleLogDiff);
  EXPECT_THROW(parse_transform("cube"), Error);
  const auto l = parse_transform_list("diff", 3);
  EXPECT_EQ(l.size(), 3u);
}

TEST(Center, ZeroPanelUnchanged) {
  const auto [c, mean] = center(MultiSeries(Matrix::Zero(2, 5)));
  EXPECT_TRUE(c.values().isZero(0.0));
  EXPECT_TRUE(mean.isZero(0.0));
}

TEST(Center, HandComputed) {
  const auto [c, mean] = center(MultiSeries(panel({{1, 2, 3}, {4, 4, 4}})));
  EXPECT_DOUBLE_EQ(mean(0), 2.0);
  EXPECT_DOUBLE_EQ(mean(1), 4.0);
  EXPECT_TRUE(c.values().isApprox(panel({{-1, 0, 1}, {0, 0, 0}})));
}

TEST(Center, DiffCommutesWithCentering) {
  Matrix v(3, 20);
  for (Eigen::Index i = 0; i < v.size(); ++i) v.data()[i] = std::cos(0.7 * static_cast<double>(i * i));
  const MultiSeries s(v);
  const std::vector<TransformKind> d(3, TransformKind::Diff);
  const Matrix a = apply_transform(center(s).first, d).values();
  const Matrix b = apply_transform(s, d).values();
  EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ReplaceAt, OnlyTargetColumnChanges) {
  const MultiSeries s(panel({{1, 2, 3}, {4, 5, 6}}));
  const MultiSeries same = replace_at(s, 2, s.at(2));
  EXPECT_EQ(same, s);
  const MultiSeries z = replace_at(s, 3, Vector::Zero(2));
  EXPECT_TRUE(z.values().col(2).isZero(0.0));
  EXPECT_EQ(z.values().leftCols(2), s.values().leftCols(2));
  EXPECT_EQ(replace_at(z, 3, s.at(3)), s);
  EXPECT_THROW(replace_at(s, 0, Vector::Zero(2)), ArgumentError);
  EXPECT_THROW(replace_at(s, 4, Vector::Zero(2)), ArgumentError);
}

TEST(Sidecar, RoundTrip) {
  Sidecar sc{{"cpi", "ip"}, {TransformKind::DoubleLogDiff, TransformKind::LogDiff}, "1960Q1"};
  const Sidecar back = sidecar_from_json(to_json(sc));
  EXPECT_EQ(back.labels, sc.labels);
  EXPECT_EQ(back.transforms, sc.transforms);
  EXPECT_EQ(back.time_origin, sc.time_origin);
}
