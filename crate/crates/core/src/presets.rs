//! Landmark index presets for the 478-point face mesh topology.
//!
//! These are plain data. Other topologies supply their own indices through
//! the retarget config file.

/// Eye contour of the first eye, in mesh order. 33 and 133 are the corners.
pub const MP478_EYE_A: [usize; 16] = [
    33, 7, 163, 144, 145, 153, 154, 155, 133, 173, 157, 158, 159, 160, 161, 246,
];
/// Eye contour of the second eye. 263 and 362 are the corners.
pub const MP478_EYE_B: [usize; 16] = [
    263, 249, 390, 373, 374, 380, 381, 382, 362, 398, 384, 385, 386, 387, 388, 466,
];
pub const MP478_IRIS_A: [usize; 5] = [468, 469, 470, 471, 472];
pub const MP478_IRIS_B: [usize; 5] = [473, 474, 475, 476, 477];

/// (top, bottom) lid landmarks per eye.
pub const MP478_EYE_A_PAIR: (usize, usize) = (159, 145);
pub const MP478_EYE_B_PAIR: (usize, usize) = (386, 374);

pub const MP478_LIPS_OUTER: [usize; 20] = [
    61, 146, 91, 181, 84, 17, 314, 405, 321, 375, 291, 409, 270, 269, 267, 0, 37, 39, 40, 185,
];
pub const MP478_LIPS_INNER: [usize; 20] = [
    78, 95, 88, 178, 87, 14, 317, 402, 318, 324, 308, 415, 310, 311, 312, 13, 82, 81, 80, 191,
];
/// (top, bottom) inner-lip landmarks.
pub const MP478_MOUTH_PAIR: (usize, usize) = (13, 14);

/// Eye corners plus nose bridge and tip; rigid enough for donor alignment.
pub const MP478_STABLE: [usize; 6] = [33, 133, 362, 263, 1, 168];

pub fn mp478_eye_a_region() -> Vec<usize> {
    MP478_EYE_A.iter().chain(&MP478_IRIS_A).copied().collect()
}

pub fn mp478_eye_b_region() -> Vec<usize> {
    MP478_EYE_B.iter().chain(&MP478_IRIS_B).copied().collect()
}

pub fn mp478_mouth_region() -> Vec<usize> {
    MP478_LIPS_OUTER.iter().chain(&MP478_LIPS_INNER).copied().collect()
}
