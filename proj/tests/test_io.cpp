#include "celltwin/io.hpp"

#include "support/synthetic_fleet.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace celltwin;

TEST(Io, FormatDoubleRoundTrips)
{
    const double values[] = {0.1, 1.0 / 3.0, -15.77, 5.45, 1e-300, 1.2924e6, 689.0, 0.0,
                             std::numeric_limits<double>::denorm_min(), std::numeric_limits<double>::max()};
    for (const double v : values)
    {
        const auto text = io::format_double(v);
        const auto back = io::parse_double(text);
        ASSERT_TRUE(back.has_value()) << text;
        EXPECT_EQ(*back, v) << text;
    }
    EXPECT_EQ(io::format_double(0.5), "0.5");
    EXPECT_EQ(io::format_double(689.0), "689");
    EXPECT_EQ(io::format_double(std::nan("")), "nan");
    EXPECT_EQ(io::format_double(-std::numeric_limits<double>::infinity()), "-inf");
}

TEST(Io, ParseRejectsTrailingGarbage)
{
    EXPECT_FALSE(io::parse_double("1.0x").has_value());
    EXPECT_FALSE(io::parse_double("").has_value());
    EXPECT_FALSE(io::parse_int("12.5").has_value());
    EXPECT_EQ(io::parse_int("-7"), -7);
}

TEST(Io, SplitFieldsTrimsAndKeepsEmpties)
{
    const auto f = io::split_fields(" a , b,,c\r");
    ASSERT_EQ(f.size(), 4u);
    EXPECT_EQ(f[0], "a");
    EXPECT_EQ(f[1], "b");
    EXPECT_EQ(f[2], "");
    EXPECT_EQ(f[3], "c");
}

TEST(Io, CsvWriterFormatsMixedFields)
{
    io::CsvWriter csv({"cycle", "x", "y", "z"});
    csv.add(3, 0.25, std::vector<double>{1.5, 2.0});
    csv.add(std::string("id"), 1.0, std::vector<double>{0.1, 0.2});
    EXPECT_EQ(csv.str(), "cycle,x,y,z\n3,0.25,1.5,2\nid,1,0.1,0.2\n");
}

TEST(Io, QuantileLabels)
{
    EXPECT_EQ(io::quantile_label(0.05), "q05");
    EXPECT_EQ(io::quantile_label(0.95), "q95");
    EXPECT_EQ(io::quantile_label(0.5, "rul_q"), "rul_q50");
    EXPECT_EQ(io::quantile_label(0.025), "q2.5");
}

TEST(Io, AtomicWriteCreatesParentsAndLeavesNoTemp)
{
    fixtures::ScratchDir dir("io");
    const auto target = dir.path() / "a" / "b" / "out.txt";
    io::write_file_atomic(target, "first");
    io::write_file_atomic(target, "second");
    EXPECT_EQ(io::read_file(target), "second");
    EXPECT_FALSE(std::filesystem::exists(target.string() + ".tmp"));
    EXPECT_THROW(io::read_file(dir.path() / "missing"), DataError);
}
