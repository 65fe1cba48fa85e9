use hopfzero::hp::{HPComplex, ScalarConfig};
use hopfzero::special::{i_closed, i_quadrature, IIntegralKey};
use rug::Float;

const P: u32 = 256;

// Reference values from an independent arbitrary-precision quadrature (60 digits, horizontal contour).
type Key = (u32, f64, f64, f64, f64, i32);

const FROZEN: &[(Key, &str, &str)] = &[
    ((0, 1.0, 0.0, 10.0, 1.0, 1), "0.000009468868802396881626766616434585196136841", "0"),
    (
        (0, 2.0, 1.0, 20.0, 1.0, 1),
        "-0.00000000001603317451131569006418981037205203607463",
        "0.00000000003066981821243291465034765063852931762345",
    ),
    (
        (1, 3.0, 1.0, 20.0, 1.0, 1),
        "0.0000000002160852582972288680304655245752799778899",
        "0.00000000003485941064302831108444356095525358120088",
    ),
    ((2, 5.0, 0.0, 40.0, 1.0, 1), "-2.765468956894552679409651965574844083565e-21", "0"),
    (
        (0, 2.5, 0.5, 7.0, 1.5, -1),
        "0.04234800479361072800518712447069043644451",
        "-0.01206158165178280977950961407305874038997",
    ),
    (
        (1, 2.0, 0.3, 3.0, 0.5, 2),
        "0.000005072991016852010609551829570710179744101",
        "-0.000003760049196351903658766030968795931742197",
    ),
    ((0, 1.5, 1.0, 5.0, 1.0, 0), "1.748038369528079873643226393260746275789", "0"),
];

fn parse(s: &str) -> Float {
    Float::with_val(P, Float::parse(s).unwrap())
}

#[test]
fn frozen_reference_values() {
    let cfg = ScalarConfig::new(P, 1e-45).unwrap();
    for &((n, q, c, w, d, l), re, im) in FROZEN {
        let key = IIntegralKey::from_f64(P, n, q, c, w, d, l).unwrap();
        let expect = HPComplex::new(parse(re), parse(im));
        let scale = expect.abs_f64();
        let closed = i_closed(&key).unwrap();
        let quad = i_quadrature(&key, &cfg).unwrap();
        let e1 = (&closed - &expect).abs_f64() / scale;
        let e2 = (&quad.value - &expect).abs_f64() / scale;
        assert!(e1 < 1e-38, "closed {n} {q} {c} {w} {d} {l}: {e1:e}");
        assert!(e2 < 1e-38, "quadrature {n} {q} {c} {w} {d} {l}: {e2:e}");
    }
}

proptest::proptest! {
    #![proptest_config(proptest::prelude::ProptestConfig::with_cases(64))]

    #[test]
    fn gamma_shift_ratio(x in 20.0f64..200.0, y in -60.0f64..60.0, a in -3.0f64..3.0, b in -2.0f64..2.0) {
        let z = HPComplex::from_f64(P, x, y);
        let shift = HPComplex::from_f64(P, a, b);
        let lhs = hopfzero::special::gamma(&(&z + &shift)).unwrap();
        let rhs = &hopfzero::special::gamma(&z).unwrap() * &z.pow(&shift).unwrap();
        let mut q = &lhs / &rhs;
        q.re -= 1u32;
        // log of the ratio is A(A - 1) / (2z) + O(z^-2)
        let amod = a.hypot(b);
        let bound = (amod * (amod + 1.0) / 2.0 + 1.0) / x.hypot(y);
        proptest::prop_assert!(q.abs_f64() <= bound, "{} > {}", q.abs_f64(), bound);
    }
}
