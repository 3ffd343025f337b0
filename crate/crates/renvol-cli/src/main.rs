fn main() { println!("renvol"); }
