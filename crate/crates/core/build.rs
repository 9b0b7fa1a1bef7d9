fn main() {
    // Debian's libopenblas bundles LAPACK; the reference liblapack is kept as a
    // fallback for symbols the OpenBLAS build may have been configured without.
    println!("cargo:rustc-link-lib=dylib=openblas");
    println!("cargo:rustc-link-lib=dylib=lapack");
    println!("cargo:rustc-link-lib=dylib=gfortran");
}
