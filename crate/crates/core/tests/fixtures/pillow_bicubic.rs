// Pillow's BICUBIC resize of `formula_image`: 8-bit output, then float
// (mode F, per channel, no intermediate rounding).
const PIL_16X12_TO_8X6: [u8; 144] = [
    83, 127, 152, 128, 129, 123, 112, 162, 119, 120, 112, 152, 132, 115, 119, 171, 106, 151,
    127, 130, 143, 131, 138, 142, 142, 145, 109, 111, 147, 99, 150, 116, 176, 158, 135, 130,
    119, 147, 141, 145, 127, 132, 113, 149, 146, 111, 116, 136, 142, 97, 101, 155, 200, 80,
    118, 116, 139, 135, 104, 137, 119, 111, 110, 121, 109, 139, 125, 133, 146, 95, 160, 94,
    107, 116, 131, 110, 135, 117, 152, 143, 105, 137, 157, 117, 143, 120, 143, 122, 111, 105,
    94, 144, 139, 99, 95, 132, 113, 145, 126, 150, 97, 124, 133, 152, 115, 119, 163, 201,
    163, 160, 71, 130, 101, 102, 112, 139, 157, 155, 140, 115, 132, 149, 138, 128, 124, 120,
    119, 100, 91, 99, 121, 162, 136, 94, 144, 142, 143, 97, 106, 105, 119, 157, 127, 112,
];
const PIL_16X12_TO_4X3: [u8; 36] = [
    120, 135, 138, 123, 139, 124, 151, 119, 139, 130, 126, 135, 122, 123, 129, 129, 141, 113,
    108, 124, 125, 137, 132, 119, 130, 136, 138, 124, 119, 114, 129, 125, 131, 133, 132, 125,
];
const PIL_F_16X12_TO_4X3: [f32; 36] = [
    119.7667, 135.0822, 138.0251, 122.8355, 139.1442, 124.0062, 150.7520, 119.0640,
    138.3158, 129.5832, 125.9319, 135.4454, 121.8163, 122.9443, 129.1728, 128.6839,
    141.1802, 112.4208, 108.4150, 123.5630, 125.2471, 136.8501, 131.6415, 119.3143,
    129.4992, 136.0583, 138.3353, 123.8264, 119.4343, 113.9228, 129.2691, 125.1776,
    130.9097, 132.6132, 132.2046, 124.8384,
];
const PIL_F_4X5_TO_8X10: [f32; 240] = [
    -11.2396, 41.7604, 94.7604, 11.9090, 64.4143, 123.5148, 60.8999, 112.3480,
    184.4877, 115.7132, 173.8309, 163.7132, 172.9044, 245.4926, 56.9044, 148.0956,
    220.6838, 31.5662, 41.2868, 99.4044, 87.6985, 20.5123, 71.9605, 149.1006,
    81.4852, 133.9906, 211.3924, 110.2396, 163.2396, 240.8209, -1.9214, 51.0786,
    103.5839, 21.5636, 75.7502, 134.4788, 71.2639, 127.9868, 199.9868, 128.7007,
    169.4234, 180.2920, 190.3796, 196.3869, 70.7883, 166.4671, 172.3431, 46.3504,
    56.9635, 97.2920, 106.9781, 35.5021, 93.4661, 148.7198, 97.7092, 156.4377,
    170.0741, 127.0455, 186.1460, 180.1748, 17.7993, 70.7993, 122.2474, 41.9937,
    99.7437, 157.7076, 93.1898, 161.0925, 232.8886, 156.2137, 160.0687, 215.4809,
    227.4657, 92.3588, 100.1985, 205.4504, 69.9313, 77.6336, 90.1679, 92.7863,
    147.7863, 67.2179, 139.0140, 147.8879, 132.0424, 204.0423, 82.5339, 162.6129,
    234.7526, 51.6969, 37.4485, 89.9191, 148.0368, 64.1350, 123.2664, 163.5949,
    120.6374, 193.9733, 196.5916, 165.1562, 173.0625, 179.7031, 193.7188, 55.5625,
    110.6094, 173.4531, 34.8750, 114.1250, 104.3594, 111.0000, 190.2500, 105.7481,
    161.1603, 168.8626, 172.8978, 183.7664, 57.7737, 204.5809, 194.4632, 5.3456,
    55.6397, 107.0515, 179.6397, 86.5511, 144.6314, 150.5073, 152.0649, 224.3015,
    88.7824, 153.5938, 209.0625, 70.4844, 86.5312, 93.3125, 99.9531, 67.7344,
    74.3750, 153.6250, 97.2031, 152.2500, 231.5000, 148.8626, 156.7023, 211.7023,
    217.8613, 92.2628, 101.9489, 250.4485, 61.8603, 50.1544, 75.2889, 133.2894,
    205.4291, 108.6924, 149.3111, 156.3945, 179.5125, 183.2845, 52.4855, 162.5363,
    170.3760, 36.5973, 52.7844, 108.1966, 116.0363, 37.6279, 114.9485, 169.9485,
    117.0668, 190.6317, 198.3340, 169.5341, 173.3062, 182.1801, 193.3549, 70.2203,
    125.4741, 204.6266, 21.5709, 98.7110, 95.0097, 166.3111, 224.0925, 129.1225,
    138.0942, 179.6234, 201.4384, 78.3038, 85.3873, 190.0493, 64.4507, 75.3193,
    89.8704, 100.7391, 156.0456, 80.1442, 153.8595, 163.5456, 160.8704, 223.8120,
    97.8193, 167.8790, 208.4977, 86.9892, 105.5523, 114.5239, 128.1603, 76.1488,
    70.1775, 147.5794, 104.3279, 181.9092, 232.9161, 138.7771, 132.8059, 190.5874,
    211.8024, 28.7467, 100.8864, 203.0368, 14.4485, 93.5662, 107.3456, 97.2279,
    174.9338, 100.1838, 172.2426, 160.5368, 181.5515, 239.4926, 50.3750, 167.1131,
    225.1136, 42.0579, 64.1112, 135.4126, 129.4414, 15.5026, 93.0839, 170.6652,
];
