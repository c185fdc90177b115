//! Architecture tables transcribed by hand, one row per printed line.

/// `(label, M, N, output H x W x C, repeat)` as printed in the architecture
/// tables.
pub type Row = (&'static str, usize, usize, (usize, usize, usize), usize);

pub const MOBILENET_1X_ENCODER: [Row; 11] = [
    ("Conv (3x3) / s2", 1, 32, (48, 50, 32), 1),
    ("Conv dws (3x3) / s1", 32, 64, (48, 50, 64), 1),
    ("Conv dws (3x3) / s2", 64, 128, (24, 25, 128), 1),
    ("Conv dws (3x3) / s1", 128, 128, (24, 25, 128), 1),
    ("Conv dws (3x3) / s2", 128, 256, (12, 13, 256), 1),
    ("Conv dws (3x3) / s1", 256, 256, (12, 13, 256), 1),
    ("Conv dws (3x3) / s1", 256, 512, (12, 13, 512), 1),
    ("Conv dws (3x3) / s1", 512, 512, (12, 13, 512), 5),
    ("Conv dws (3x3) / s2", 512, 1024, (6, 7, 1024), 1),
    ("Conv dws (3x3) / s1", 1024, 1024, (6, 7, 1024), 1),
    ("Avg Pool (6x7) / s1", 1024, 1024, (1, 1, 1024), 1),
];

pub const MOBILENET_1X_DECODER: [Row; 11] = [
    ("ConvTranspose dw (6x7) / s1", 1024, 1024, (6, 7, 1024), 1),
    ("ConvTranspose (3x3) / s1", 1024, 1024, (6, 7, 1024), 1),
    ("ConvTranspose (3x3) / s2", 1024, 512, (12, 13, 512), 1),
    ("ConvTranspose (3x3) / s1", 512, 512, (12, 13, 512), 5),
    ("ConvTranspose (3x3) / s1", 512, 256, (12, 13, 256), 1),
    ("ConvTranspose (3x3) / s1", 256, 256, (12, 13, 256), 1),
    ("ConvTranspose (3x3) / s2", 256, 128, (24, 25, 128), 1),
    ("ConvTranspose (3x3) / s1", 128, 128, (24, 25, 128), 1),
    ("ConvTranspose (3x3) / s2", 128, 64, (48, 50, 64), 1),
    ("ConvTranspose (3x3) / s1", 64, 32, (48, 50, 32), 1),
    ("ConvTranspose (3x3) / s2", 32, 1, (96, 100, 1), 1),
];

pub fn ds_cae_encoder(n: usize) -> Vec<Row> {
    vec![
        ("Conv (3x3) / s2", 1, 16, (48, 50, 16), 1),
        ("Conv dws (3x3) / s2", 16, 16, (24, 25, 16), 1),
        ("Conv dws (3x3) / s2", 16, 64, (12, 13, 64), 1),
        ("Conv dws (3x3) / s1", 64, 64, (12, 13, 64), n),
        ("Avg Pool (12x13) / s1", 64, 64, (1, 1, 64), 1),
    ]
}

pub fn ds_cae_decoder(n: usize) -> Vec<Row> {
    vec![
        ("ConvTranspose dw (12x13) / s1", 64, 64, (12, 13, 64), 1),
        ("ConvTranspose (3x3) / s1", 64, 64, (12, 13, 64), n),
        ("ConvTranspose (3x3) / s2", 64, 16, (24, 25, 16), 1),
        ("ConvTranspose (3x3) / s2", 16, 16, (48, 50, 16), 1),
        ("ConvTranspose (3x3) / s2", 16, 1, (96, 100, 1), 1),
    ]
}

