fn main() {
    println!("{}", offrl::probe());
}
