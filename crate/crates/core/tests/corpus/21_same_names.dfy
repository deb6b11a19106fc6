class A {
  method Get() returns (r: int)
    ensures r == 1
  {
    r := 1;
  }
}

class B {
  method Get() returns (r: int)
    ensures r == 2
  {
    r := 2;
  }
}
